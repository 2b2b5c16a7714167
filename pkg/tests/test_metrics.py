import random
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from citeframe import metrics as mt
from citeframe.corpus import CitationInstance
from citeframe.schema import builtin_schema

SCICITE = builtin_schema("scicite")


def kappa_oracle(a, b):
    """Brute-force Cohen's kappa by explicit pair counting over the union
    alphabet; independent of the implementation under test."""
    n = len(a)
    agreements = 0
    for i in range(n):
        if a[i] == b[i]:
            agreements += 1
    p_o = agreements / n
    alphabet = set(a) | set(b)
    p_e = 0.0
    for label in alphabet:
        pa = sum(1 for x in a if x == label) / n
        pb = sum(1 for y in b if y == label) / n
        p_e += pa * pb
    if p_e >= 1.0:
        return 1.0
    return (p_o - p_e) / (1.0 - p_e)


def evaluate_oracle(counts):
    """Per-class tally oracle on a raw counts matrix (gold rows, pred cols)."""
    k = len(counts)
    total = sum(sum(row) for row in counts)
    f1s = []
    for c in range(k):
        tp = counts[c][c]
        fn = sum(counts[c]) - tp
        fp = sum(counts[r][c] for r in range(k)) - tp
        support = tp + fn
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        if support > 0:
            f1s.append(f1)
    accuracy = sum(counts[c][c] for c in range(k)) / total
    return accuracy, sum(f1s) / len(f1s)


class TestCohenKappa:
    def test_perfect_agreement(self):
        assert mt.cohen_kappa(["x", "y", "x"], ["x", "y", "x"]).kappa == 1.0

    def test_hand_case_half(self):
        result = mt.cohen_kappa(["x", "x", "y", "y"], ["x", "y", "y", "y"])
        assert result.p_o == pytest.approx(0.75)
        assert result.p_e == pytest.approx(0.5)
        assert result.kappa == pytest.approx(0.5)

    def test_hand_case_minus_one(self):
        result = mt.cohen_kappa(["x", "y"], ["y", "x"])
        assert result.kappa == pytest.approx(-1.0)

    def test_constant_equal_sequences(self):
        assert mt.cohen_kappa(["x", "x"], ["x", "x"]).kappa == 1.0

    def test_errors(self):
        with pytest.raises(mt.MetricsError):
            mt.cohen_kappa([], [])
        with pytest.raises(mt.MetricsError):
            mt.cohen_kappa(["x"], ["x", "y"])

    def test_against_oracle(self):
        rng = random.Random(7)
        for _ in range(500):
            n = rng.randint(1, 80)
            alphabet = [chr(97 + i) for i in range(rng.randint(2, 7))]
            a = [rng.choice(alphabet) for _ in range(n)]
            b = [rng.choice(alphabet) for _ in range(n)]
            assert mt.cohen_kappa(a, b).kappa == pytest.approx(
                kappa_oracle(a, b), abs=1e-12)

    @given(st.lists(st.sampled_from("abcd"), min_size=1, max_size=40),
           st.data())
    def test_properties(self, a, data):
        b = data.draw(st.lists(st.sampled_from("abcd"), min_size=len(a),
                               max_size=len(a)))
        forward = mt.cohen_kappa(a, b).kappa
        assert forward == pytest.approx(mt.cohen_kappa(b, a).kappa)
        assert -1.0 <= forward <= 1.0 + 1e-12
        assert mt.cohen_kappa(a, a).kappa == 1.0
        relabel = {"a": "p", "b": "q", "c": "r", "d": "s"}
        relabeled = mt.cohen_kappa([relabel[x] for x in a],
                                   [relabel[x] for x in b]).kappa
        assert relabeled == pytest.approx(forward)


class TestAgreementMatrix:
    def test_pair_count(self):
        seq = ["Use", "Modify", "Use"]
        annotations = {f"m{i}": list(seq) for i in range(4)}
        annotations["human"] = list(seq)
        matrix = mt.agreement_matrix(annotations)
        assert len(matrix) == 10  # C(5, 2)
        assert all(r.kappa == 1.0 for r in matrix.values())

    def test_pairwise_unresolved_dropping(self):
        annotations = {
            "a": ["x", "y", None, "x"],
            "b": ["x", "y", "x", None],
            "c": ["x", "y", "x", "x"],
        }
        matrix = mt.agreement_matrix(annotations)
        assert matrix[("a", "b")].n == 2   # positions 0, 1
        assert matrix[("a", "c")].n == 3
        assert matrix[("b", "c")].n == 3

    def test_too_few_annotators(self):
        with pytest.raises(mt.MetricsError):
            mt.agreement_matrix({"only": ["x"]})

    def test_misaligned(self):
        with pytest.raises(mt.MetricsError):
            mt.agreement_matrix({"a": ["x"], "b": ["x", "y"]})


def make_gold(labels):
    return [CitationInstance(id=f"i{k}", context="c", source_doc_id="D",
                             gold={"scicite": lab})
            for k, lab in enumerate(labels)]


class TestConfusionMatrix:
    def test_diagonal(self):
        gold = make_gold(["Method"] * 5)
        preds = {f"i{k}": "Method" for k in range(5)}
        cm = mt.confusion_matrix(gold, preds, SCICITE)
        assert cm.total == 5
        assert cm.counts[1][1] == 5

    def test_direct_tally(self):
        gold = make_gold(["Background", "Background", "Method", "Method"])
        preds = {"i0": "Background", "i1": "Method", "i2": "Method",
                 "i3": "Method"}
        cm = mt.confusion_matrix(gold, preds, SCICITE)
        assert cm.counts[0][0] == 1
        assert cm.counts[0][1] == 1
        assert cm.counts[1][1] == 2

    def test_exclusion(self):
        gold = make_gold(["Method"] * 10)
        preds = {f"i{k}": ("Method" if k else None) for k in range(10)}
        cm = mt.confusion_matrix(gold, preds, SCICITE)
        assert cm.total == 9
        assert cm.excluded == 1

    def test_unknown_prediction_id(self):
        gold = make_gold(["Method"])
        with pytest.raises(mt.MetricsError):
            mt.confusion_matrix(gold, {"ghost": "Method"}, SCICITE)


class TestEvaluate:
    def test_worked_example(self):
        gold = make_gold(["Background", "Background", "Method", "Method"])
        preds = {"i0": "Background", "i1": "Method", "i2": "Method",
                 "i3": "Method"}
        report = mt.evaluate(mt.confusion_matrix(gold, preds, SCICITE))
        assert report.accuracy == pytest.approx(0.75)
        by_label = {c.label: c for c in report.per_class}
        assert by_label["Background"].f1 == pytest.approx(2 / 3)
        assert by_label["Method"].f1 == pytest.approx(0.8)
        assert report.macro_f1 == pytest.approx(0.7333, abs=1e-4)

    def test_perfect(self):
        gold = make_gold(["Background", "Method", "ResultComparison"])
        preds = {"i0": "Background", "i1": "Method", "i2": "ResultComparison"}
        report = mt.evaluate(mt.confusion_matrix(gold, preds, SCICITE))
        assert report.accuracy == 1.0
        assert report.macro_f1 == 1.0

    def test_supported_but_never_predicted_counts_as_zero(self):
        gold = make_gold(["Background", "Method"])
        preds = {"i0": "Background", "i1": "Background"}
        report = mt.evaluate(mt.confusion_matrix(gold, preds, SCICITE))
        by_label = {c.label: c for c in report.per_class}
        assert by_label["Method"].f1 == 0.0
        # both supported classes enter the macro average
        assert report.macro_f1 == pytest.approx(by_label["Background"].f1 / 2)

    def test_against_oracle_random_matrices(self):
        rng = random.Random(11)
        for _ in range(200):
            k = rng.randint(2, 7)
            counts = [[rng.randint(0, 50) for _ in range(k)] for _ in range(k)]
            if sum(sum(row) for row in counts) == 0:
                continue
            cm = mt.ConfusionMatrix(schema="x",
                                    labels=[f"L{i}" for i in range(k)],
                                    counts=counts)
            report = mt.evaluate(cm)
            acc, macro = evaluate_oracle(counts)
            assert report.accuracy == acc
            assert report.macro_f1 == macro

    def test_label_permutation_invariance(self):
        rng = random.Random(3)
        counts = [[rng.randint(0, 20) for _ in range(4)] for _ in range(4)]
        counts[0][0] += 1  # ensure non-empty
        labels = [f"L{i}" for i in range(4)]
        base = mt.evaluate(mt.ConfusionMatrix("x", labels, counts))
        perm = [2, 0, 3, 1]
        permuted_counts = [[counts[perm[r]][perm[c]] for c in range(4)]
                           for r in range(4)]
        permuted = mt.evaluate(mt.ConfusionMatrix(
            "x", [labels[p] for p in perm], permuted_counts))
        assert permuted.accuracy == pytest.approx(base.accuracy)
        assert permuted.macro_f1 == pytest.approx(base.macro_f1)


class TestCrossDomainDrop:
    @pytest.mark.parametrize("in_f1, cross_f1, expected", [
        (0.51, 0.49, 4),
        (0.65, 0.56, 14),
        (0.59, 0.55, 7),
        (0.5, 0.5, 0),
    ])
    def test_known_pairs(self, in_f1, cross_f1, expected):
        assert mt.cross_domain_drop(in_f1, cross_f1).drop_percent == expected

    def test_negative_drop_is_small(self):
        result = mt.cross_domain_drop(0.5, 0.6)
        assert result.drop_percent == -20
        assert result.bucket == "small"

    @pytest.mark.parametrize("drop, bucket", [
        (20, "small"), (21, "medium"), (40, "medium"), (41, "large"),
    ])
    def test_bucket_boundaries(self, drop, bucket):
        result = mt.cross_domain_drop(1.0, 1.0 - drop / 100)
        assert result.drop_percent == drop
        assert result.bucket == bucket

    def test_zero_in_f1_rejected(self):
        with pytest.raises(mt.MetricsError):
            mt.cross_domain_drop(0.0, 0.1)


class TestAggregateDrops:
    def test_known_mean(self):
        drops = [mt.cross_domain_drop(1.0, 1.0 - d / 100)
                 for d in (21, 20, 7, 15)]
        mean = mt.aggregate_drops(drops)
        assert mean == pytest.approx(15.75)
        assert mt.format_mean_drop(mean) == "15.8"

    def test_single_element(self):
        drops = [mt.cross_domain_drop(0.5, 0.4)]
        assert mt.aggregate_drops(drops) == 20.0

    def test_empty_rejected(self):
        with pytest.raises(mt.MetricsError):
            mt.aggregate_drops([])


def test_round_half_away():
    assert mt.round_half_away(0.485, 2) == 0.49
    assert mt.round_half_away(15.75, 1) == 15.8
    assert mt.round_half_away(-10.5) == -11.0
    assert mt.round_half_away(2.5) == 3.0
