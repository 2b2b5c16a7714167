"""Agreement and classification metrics: pairwise Cohen's kappa, confusion
matrices, accuracy / per-class P-R-F1 / macro F1, and cross-domain drop
statistics with the small / medium / large bucketing used in reports.

Conventions:

* zero-denominator precision/recall/F1 define to 0;
* macro F1 averages over classes with gold support > 0;
* drop percentages round half away from zero.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from .schema import LabelSchema


class MetricsError(Exception):
    pass


def round_half_away(value: float, ndigits: int = 0) -> float:
    """Round half away from zero (10.5 -> 11, -10.5 -> -11), decimal-exact."""
    q = Decimal(1).scaleb(-ndigits)
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class KappaResult:
    kappa: float
    p_o: float
    p_e: float
    n: int


def cohen_kappa(a, b) -> KappaResult:
    """Chance-corrected agreement between two aligned label sequences.

    kappa = (p_o - p_e) / (1 - p_e), with p_e from the two raters' marginal
    label distributions over the union alphabet. Two identical constant
    sequences (p_e = 1) yield kappa = 1.
    """
    a, b = list(a), list(b)
    if not a:
        raise MetricsError("cohen_kappa needs at least one item")
    if len(a) != len(b):
        raise MetricsError(f"length mismatch: {len(a)} vs {len(b)}")
    n = len(a)
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    count_a, count_b = Counter(a), Counter(b)
    p_e = sum(count_a[k] * count_b.get(k, 0) for k in count_a) / (n * n)
    if p_e >= 1.0:
        return KappaResult(kappa=1.0, p_o=p_o, p_e=p_e, n=n)
    kappa = (p_o - p_e) / (1.0 - p_e)
    return KappaResult(kappa=kappa, p_o=p_o, p_e=p_e, n=n)


def agreement_matrix(annotations) -> dict[tuple[str, str], KappaResult]:
    """Pairwise kappas over annotators that labeled the same instance list.

    ``annotations`` maps annotator_id -> aligned label sequence, where None
    marks an unresolved item. Unresolved items are dropped per pair, not
    globally. Returns one entry per unordered pair, keyed in input order.
    """
    annotations = dict(annotations)
    if len(annotations) < 2:
        raise MetricsError("need at least two annotators")
    ids = list(annotations)
    lengths = {len(v) for v in annotations.values()}
    if len(lengths) != 1:
        raise MetricsError(f"misaligned label sequences: lengths {sorted(lengths)}")
    out = {}
    for i, first in enumerate(ids):
        for second in ids[i + 1:]:
            pairs = [(x, y) for x, y in zip(annotations[first], annotations[second])
                     if x is not None and y is not None]
            if not pairs:
                raise MetricsError(
                    f"no jointly resolved items for pair ({first}, {second})"
                )
            out[(first, second)] = cohen_kappa(*zip(*pairs))
    return out


@dataclass
class ConfusionMatrix:
    schema: str
    labels: list[str]  # row/column order
    counts: list[list[int]]  # counts[gold][pred]
    excluded: int = 0

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    schema: str
    annotator_id: str
    dataset: str
    domain_tag: str  # "in_domain" or "cross_domain"
    accuracy: float
    macro_f1: float
    per_class: list[ClassMetrics] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "schema": self.schema,
            "annotator_id": self.annotator_id,
            "dataset": self.dataset,
            "domain_tag": self.domain_tag,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class": [
                {"label": c.label, "precision": c.precision, "recall": c.recall,
                 "f1": c.f1, "support": c.support}
                for c in self.per_class
            ],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "EvalReport":
        return cls(
            schema=rec["schema"],
            annotator_id=rec["annotator_id"],
            dataset=rec.get("dataset", ""),
            domain_tag=rec.get("domain_tag", "in_domain"),
            accuracy=rec["accuracy"],
            macro_f1=rec["macro_f1"],
            per_class=[ClassMetrics(**c) for c in rec.get("per_class", [])],
        )


def confusion_matrix(gold_instances, predictions, schema: LabelSchema) -> ConfusionMatrix:
    """Tally gold vs predicted labels over ``schema``.

    ``predictions`` maps instance_id -> label (None for unresolved).
    Instances lacking either a gold label for this schema or a resolved
    prediction are counted in ``excluded``. Predictions for ids absent from
    the gold corpus are an error.
    """
    gold_instances = list(gold_instances)
    known = {inst.id for inst in gold_instances}
    unknown = set(predictions) - known
    if unknown:
        raise MetricsError(f"predictions for unknown instance ids: {sorted(unknown)[:5]}")
    labels = schema.label_ids()
    index = {lab: i for i, lab in enumerate(labels)}
    counts = [[0] * len(labels) for _ in labels]
    excluded = 0
    for inst in gold_instances:
        gold = inst.gold.get(schema.name)
        pred = predictions.get(inst.id)
        if gold is None or pred is None:
            excluded += 1
            continue
        gold_id, pred_id = schema.resolve(gold), schema.resolve(pred)
        if gold_id is None:
            raise MetricsError(f"gold label {gold!r} not in schema {schema.name!r}")
        if pred_id is None:
            raise MetricsError(f"predicted label {pred!r} not in schema {schema.name!r}")
        counts[index[gold_id]][index[pred_id]] += 1
    return ConfusionMatrix(schema=schema.name, labels=labels, counts=counts,
                           excluded=excluded)


def evaluate(confusion: ConfusionMatrix, annotator_id: str = "",
             dataset: str = "", domain_tag: str = "in_domain") -> EvalReport:
    """Accuracy, per-class P/R/F1, and macro F1 from a confusion matrix.

    Macro F1 averages over classes with gold support > 0; a supported class
    that is never predicted contributes F1 = 0.
    """
    total = confusion.total
    if total < 1:
        raise MetricsError("empty confusion matrix")
    k = len(confusion.labels)
    per_class = []
    for i, label in enumerate(confusion.labels):
        tp = confusion.counts[i][i]
        support = sum(confusion.counts[i])
        predicted = sum(confusion.counts[r][i] for r in range(k))
        precision = tp / predicted if predicted else 0.0
        recall = tp / support if support else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class.append(ClassMetrics(label=label, precision=precision,
                                      recall=recall, f1=f1, support=support))
    supported = [c for c in per_class if c.support > 0]
    if not supported:
        raise MetricsError("no class has gold support")
    macro_f1 = sum(c.f1 for c in supported) / len(supported)
    accuracy = sum(confusion.counts[i][i] for i in range(k)) / total
    return EvalReport(schema=confusion.schema, annotator_id=annotator_id,
                      dataset=dataset, domain_tag=domain_tag,
                      accuracy=accuracy, macro_f1=macro_f1, per_class=per_class)


BUCKET_SMALL = "small"    # drop <= 20 points (improvements included)
BUCKET_MEDIUM = "medium"  # 21..40
BUCKET_LARGE = "large"    # > 40


@dataclass(frozen=True)
class DropResult:
    in_f1: float
    cross_f1: float
    drop_percent: int
    bucket: str


def _bucket(drop_percent: int) -> str:
    if drop_percent <= 20:
        return BUCKET_SMALL
    if drop_percent <= 40:
        return BUCKET_MEDIUM
    return BUCKET_LARGE


def cross_domain_drop(in_f1: float, cross_f1: float) -> DropResult:
    """Relative macro-F1 drop, as an integer percentage, when moving from the
    in-domain to the cross-domain test set. Negative drops (improvements)
    are allowed and land in the small bucket."""
    if not 0 < in_f1 <= 1:
        raise MetricsError(f"in_f1 must be in (0, 1], got {in_f1}")
    if not 0 <= cross_f1 <= 1:
        raise MetricsError(f"cross_f1 must be in [0, 1], got {cross_f1}")
    drop = int(round_half_away(100.0 * (in_f1 - cross_f1) / in_f1))
    return DropResult(in_f1=in_f1, cross_f1=cross_f1, drop_percent=drop,
                      bucket=_bucket(drop))


def aggregate_drops(drops) -> float:
    """Arithmetic mean of drop percentages; callers print it to one decimal."""
    drops = list(drops)
    if not drops:
        raise MetricsError("aggregate_drops needs at least one drop")
    return sum(d.drop_percent for d in drops) / len(drops)


def format_mean_drop(mean: float) -> str:
    return f"{round_half_away(mean, 1):.1f}"
