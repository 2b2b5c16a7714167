"""Citation corpus loading, split validation, and domain filtering.

Corpora are JSONL files, one citation instance per line, with fields
``id``, ``context``, ``citing_title``, ``cited_title``, ``section``,
``source_doc_id``, ``domain`` and ``gold`` (a schema-name -> label object).
Unknown extra fields are preserved on round-trip.

Splits are explicit id lists (JSONL with ``id`` and ``side``), never random
sampling; ``check_split`` enforces that no source document contributes
instances to both sides.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import schema as schema_mod

UNKNOWN_DOMAIN = "unknown"


class CorpusError(Exception):
    """Malformed corpus or split data."""


@dataclass(frozen=True)
class CitationInstance:
    id: str
    context: str
    source_doc_id: str = ""
    citing_title: str | None = None
    cited_title: str | None = None
    section: str | None = None
    domain: str | None = None
    gold: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.context:
            raise CorpusError(f"instance {self.id!r}: context is empty")

    def to_record(self) -> dict:
        rec = {
            "id": self.id,
            "context": self.context,
            "citing_title": self.citing_title,
            "cited_title": self.cited_title,
            "section": self.section,
            "source_doc_id": self.source_doc_id,
            "domain": self.domain,
            "gold": dict(self.gold),
        }
        rec.update(self.extra)
        return rec


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[str, ...]
    test: tuple[str, ...]


@dataclass
class SplitReport:
    """Outcome of check_split: empty lists mean the split is valid."""
    leaking_docs: list[str] = field(default_factory=list)
    overlapping_ids: list[str] = field(default_factory=list)

    def ok(self) -> bool:
        return not self.leaking_docs and not self.overlapping_ids


_KNOWN_FIELDS = ("id", "context", "citing_title", "cited_title", "section",
                 "source_doc_id", "domain", "gold")


def _instance_from_record(rec: dict, where: str) -> CitationInstance:
    if "id" not in rec or "context" not in rec:
        raise CorpusError(f"{where}: record needs 'id' and 'context'")
    gold = rec.get("gold") or {}
    if not isinstance(gold, dict):
        raise CorpusError(f"{where}: 'gold' must be an object")
    for sch_name, label in gold.items():
        sch = schema_mod.builtin_schema(sch_name)
        if not schema_mod.validate_label(sch, label):
            raise CorpusError(
                f"{where}: gold label {label!r} is not valid in schema {sch_name!r}"
            )
    extra = {k: v for k, v in rec.items() if k not in _KNOWN_FIELDS}
    try:
        return CitationInstance(
            id=str(rec["id"]),
            context=rec["context"],
            citing_title=rec.get("citing_title"),
            cited_title=rec.get("cited_title"),
            section=rec.get("section"),
            source_doc_id=str(rec.get("source_doc_id", "")),
            domain=rec.get("domain"),
            gold=dict(gold),
            extra=extra,
        )
    except CorpusError as exc:
        raise CorpusError(f"{where}: {exc}") from None


def load_instances(path, format: str = "jsonl") -> list[CitationInstance]:
    """Load a corpus file; gold labels are validated eagerly.

    Errors carry the offending line number. Duplicate ids are rejected.
    """
    if format != "jsonl":
        raise CorpusError(f"unsupported corpus format {format!r}")
    instances = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{where}: malformed record: {exc}") from exc
            inst = _instance_from_record(rec, where)
            if inst.id in seen:
                raise CorpusError(
                    f"{where}: duplicate id {inst.id!r} "
                    f"(first seen on line {seen[inst.id]})"
                )
            seen[inst.id] = lineno
            instances.append(inst)
    return instances


def save_instances(instances, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_record(), ensure_ascii=False) + "\n")


def load_split(path) -> CorpusSplit:
    """Load a split file: JSONL records with ``id`` and ``side``."""
    train, test = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed record: {exc}") from exc
            side = rec.get("side")
            if side == "train":
                train.append(str(rec["id"]))
            elif side == "test":
                test.append(str(rec["id"]))
            else:
                raise CorpusError(f"{path}:{lineno}: side must be 'train' or 'test'")
    return CorpusSplit(train=tuple(train), test=tuple(test))


def save_split(split: CorpusSplit, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for id_ in split.train:
            fh.write(json.dumps({"id": id_, "side": "train"}) + "\n")
        for id_ in split.test:
            fh.write(json.dumps({"id": id_, "side": "test"}) + "\n")


def check_split(corpus, split: CorpusSplit) -> SplitReport:
    """Validate a split against the leakage rule.

    Reports every source_doc_id with instances on both sides, and every id
    present in both train and test. Ids in the split must exist in the corpus.
    """
    by_id = {inst.id: inst for inst in corpus}
    for id_ in (*split.train, *split.test):
        if id_ not in by_id:
            raise CorpusError(f"split references unknown instance id {id_!r}")
    report = SplitReport()
    train_set, test_set = set(split.train), set(split.test)
    report.overlapping_ids = sorted(train_set & test_set)
    train_docs = {by_id[i].source_doc_id for i in train_set}
    test_docs = {by_id[i].source_doc_id for i in test_set}
    report.leaking_docs = sorted(d for d in train_docs & test_docs if d)
    return report


def make_split(corpus, test_target: int) -> CorpusSplit:
    """Build a doc-disjoint split by greedily moving whole documents to the
    test side until it holds at least ``test_target`` instances.

    A convenience only; reproduction runs should load released split files.
    """
    if test_target < 0 or test_target > len(corpus):
        raise CorpusError(f"test_target {test_target} out of range")
    by_doc: dict[str, list[str]] = {}
    doc_order = []
    for inst in corpus:
        if inst.source_doc_id not in by_doc:
            doc_order.append(inst.source_doc_id)
        by_doc.setdefault(inst.source_doc_id, []).append(inst.id)
    test: list[str] = []
    test_docs = set()
    for doc in doc_order:
        if len(test) >= test_target:
            break
        test.extend(by_doc[doc])
        test_docs.add(doc)
    train = [inst.id for inst in corpus if inst.source_doc_id not in test_docs]
    split = CorpusSplit(train=tuple(train), test=tuple(test))
    report = check_split(corpus, split)
    if not report.ok():
        raise CorpusError(f"generated split failed validation: {report}")
    return split


def filter_by_domain(corpus, domains) -> list[CitationInstance]:
    """Keep instances whose domain is in ``domains``, preserving order.

    Instances without a domain are kept only when the sentinel ``unknown``
    is among the requested domains.
    """
    wanted = set(domains)
    out = []
    for inst in corpus:
        dom = inst.domain if inst.domain is not None else UNKNOWN_DOMAIN
        if dom in wanted:
            out.append(inst)
    return out
