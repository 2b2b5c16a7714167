"""Prompt construction, response parsing, and majority-vote aggregation for
LLM batch annotation.

Each instance is annotated ``n_runs`` times; a response must end with a
``LABEL: <id>`` line (the last such line wins, since the rationale may
mention label names). The aggregated label is the one held by a strict
majority of the valid votes. A three-way tie triggers exactly one extra run;
if there is still no strict majority the instance is marked unresolved and
excluded downstream.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .corpus import CitationInstance
from .llm_backend import BackendError, CompletionClient
from .schema import LabelSchema

HUMAN_ANNOTATOR = "human"
MISSING_FIELD = "unknown"

RESOLVED_VALUES = ("direct", "majority", "tie_extra_run", "unresolved")

_LABEL_LINE_RE = re.compile(r"^\s*LABEL:\s*(?P<value>.+?)\s*$", re.MULTILINE)


class ResponseParseError(Exception):
    """Completion text did not yield a valid label; carries the raw text."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class BatchAbortedError(Exception):
    """A transport failure aborted the batch; completed records are attached."""

    def __init__(self, message: str, partial_records):
        super().__init__(message)
        self.partial_records = list(partial_records)


@dataclass(frozen=True)
class AnnotationRecord:
    instance_id: str
    annotator_id: str
    schema: str
    run: int  # 0 for aggregated / human records
    label: str  # empty iff resolved == "unresolved"
    rationale: str | None = None
    resolved: str = "direct"

    def __post_init__(self):
        if self.resolved not in RESOLVED_VALUES:
            raise ValueError(f"bad resolved flag {self.resolved!r}")
        if self.resolved != "unresolved" and not self.label:
            raise ValueError("non-unresolved record needs a label")

    def to_record(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "annotator_id": self.annotator_id,
            "schema": self.schema,
            "run": self.run,
            "label": self.label,
            "rationale": self.rationale,
            "resolved": self.resolved,
        }


DEFAULT_PREAMBLE = (
    "You are annotating citation contexts from scientific papers. Read the "
    "citation context below and assign exactly one label from the inventory."
)

DEFAULT_PER_LABEL_BLOCK = "- {id}: {definition}{rules}"

DEFAULT_CONTEXT_BLOCK = (
    "Citation context:\n{context}\n"
    "Citing paper title: {citing_title}\n"
    "Cited paper title: {cited_title}\n"
    "Section: {section}"
)

DEFAULT_OUTPUT_INSTRUCTIONS = (
    "First give a short rationale for your decision. Then end your answer "
    "with a single final line of the form:\nLABEL: <one label id from the "
    "inventory>"
)


@dataclass(frozen=True)
class PromptTemplate:
    schema: str
    preamble: str = DEFAULT_PREAMBLE
    per_label_block: str = DEFAULT_PER_LABEL_BLOCK
    context_block: str = DEFAULT_CONTEXT_BLOCK
    output_instructions: str = DEFAULT_OUTPUT_INSTRUCTIONS
    body: str | None = None  # full-text override with {labels}/{context}/... slots


def default_template(schema_name: str) -> PromptTemplate:
    return PromptTemplate(schema=schema_name)


def load_template(path, schema_name: str) -> PromptTemplate:
    """Load a plain-text template with named placeholders
    ``{labels}``, ``{context}``, ``{citing_title}``, ``{cited_title}``,
    ``{section}``."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if "{labels}" not in text or "{context}" not in text:
        raise ValueError(f"{path}: template needs {{labels}} and {{context}}")
    return PromptTemplate(schema=schema_name, body=text)


def _render_label_inventory(template: PromptTemplate, schema: LabelSchema) -> str:
    blocks = []
    for ld in schema.labels:
        rules = ""
        if ld.decision_rules:
            rules = " " + " ".join(ld.decision_rules)
        blocks.append(template.per_label_block.format(
            id=ld.id, display_name=ld.display_name,
            definition=ld.definition, rules=rules,
        ))
    return "\n".join(blocks)


def build_prompt(template: PromptTemplate, schema: LabelSchema,
                 instance: CitationInstance) -> str:
    """Render the annotation prompt for one instance. Deterministic; missing
    metadata renders as the literal token ``unknown`` to keep the prompt
    shape (and therefore the cache key) stable."""
    if template.schema != schema.name:
        raise ValueError(
            f"template is for schema {template.schema!r}, got {schema.name!r}"
        )
    fields = {
        "labels": _render_label_inventory(template, schema),
        "context": instance.context,
        "citing_title": instance.citing_title or MISSING_FIELD,
        "cited_title": instance.cited_title or MISSING_FIELD,
        "section": instance.section or MISSING_FIELD,
    }
    if template.body is not None:
        return template.body.format(**fields)
    context = template.context_block.format(
        **{k: fields[k] for k in
           ("context", "citing_title", "cited_title", "section")}
    )
    return "\n\n".join([
        template.preamble,
        "Label inventory:\n" + fields["labels"],
        context,
        template.output_instructions,
    ])


def parse_response(raw: str, schema: LabelSchema) -> tuple[str, str]:
    """Extract (rationale, label) from a completion.

    The label comes from the last ``LABEL: <value>`` line; the value is
    canonicalized and must belong to the schema.
    """
    matches = list(_LABEL_LINE_RE.finditer(raw))
    if not matches:
        raise ResponseParseError("no 'LABEL: <id>' line in response", raw)
    last = matches[-1]
    label = schema.resolve(last.group("value"))
    if label is None:
        raise ResponseParseError(
            f"label {last.group('value')!r} is not in schema {schema.name!r}", raw
        )
    rationale = raw[:last.start()].strip()
    return rationale, label


def majority_vote(runs) -> tuple[str | None, str]:
    """Label held by a strict majority of ``runs``, or (None, "tie").

    Returns ("<label>", "majority") when one label has strictly more than
    half the votes; order of runs is irrelevant.
    """
    runs = list(runs)
    if not runs:
        raise ValueError("majority_vote needs at least one run")
    label, count = Counter(runs).most_common(1)[0]
    if count * 2 > len(runs):
        return label, "majority"
    return None, "tie"


def _parse_or_none(raw: str, schema: LabelSchema):
    try:
        return parse_response(raw, schema)
    except ResponseParseError:
        return None


def annotate_batch(instances, schema: LabelSchema, template: PromptTemplate,
                   client: CompletionClient, n_runs: int = 3) -> list[AnnotationRecord]:
    """Annotate ``instances`` with ``n_runs`` completions each plus one
    aggregated record per instance (run = 0).

    Parse failures abstain from the vote. A tie requests exactly one extra
    run; a persistent tie yields an unresolved aggregate. Output order
    follows input order regardless of request parallelism. Transport errors
    raise BatchAbortedError carrying the records completed so far.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    instances = list(instances)
    prompts = [build_prompt(template, schema, inst) for inst in instances]

    jobs = [(i, run) for i in range(len(instances))
            for run in range(1, n_runs + 1)]
    results: dict[tuple[int, int], object] = {}
    with ThreadPoolExecutor(max_workers=client.config.max_parallel) as pool:
        futures = {pool.submit(client.complete, prompts[i], run): (i, run)
                   for i, run in jobs}
        for fut, key in futures.items():
            try:
                results[key] = fut.result()
            except BackendError as exc:
                results[key] = exc

    records: list[AnnotationRecord] = []
    failure = None
    for i, inst in enumerate(instances):
        run_results = [results[(i, run)] for run in range(1, n_runs + 1)]
        if any(isinstance(r, BackendError) for r in run_results):
            failure = next(r for r in run_results if isinstance(r, BackendError))
            break
        inst_records, votes = [], []
        for run, raw in enumerate(run_results, start=1):
            parsed = _parse_or_none(raw, schema)
            if parsed is None:
                inst_records.append(AnnotationRecord(
                    instance_id=inst.id, annotator_id=client.config.model_name,
                    schema=schema.name, run=run, label="", rationale=None,
                    resolved="unresolved"))
            else:
                rationale, label = parsed
                votes.append(label)
                inst_records.append(AnnotationRecord(
                    instance_id=inst.id, annotator_id=client.config.model_name,
                    schema=schema.name, run=run, label=label,
                    rationale=rationale, resolved="direct"))

        agg_label, agg_resolved = None, "unresolved"
        if votes:
            label, outcome = majority_vote(votes)
            if outcome == "majority":
                agg_label = label
                agg_resolved = "direct" if n_runs == 1 else "majority"
        if agg_label is None:
            # tie (or no valid votes): one extra run, then give up
            extra_run = n_runs + 1
            try:
                raw = client.complete(prompts[i], extra_run)
            except BackendError as exc:
                failure = exc
                break
            parsed = _parse_or_none(raw, schema)
            if parsed is None:
                inst_records.append(AnnotationRecord(
                    instance_id=inst.id, annotator_id=client.config.model_name,
                    schema=schema.name, run=extra_run, label="",
                    rationale=None, resolved="unresolved"))
            else:
                rationale, label = parsed
                votes.append(label)
                inst_records.append(AnnotationRecord(
                    instance_id=inst.id, annotator_id=client.config.model_name,
                    schema=schema.name, run=extra_run, label=label,
                    rationale=rationale, resolved="direct"))
            if votes:
                label, outcome = majority_vote(votes)
                if outcome == "majority":
                    agg_label = label
                    agg_resolved = "tie_extra_run"

        inst_records.append(AnnotationRecord(
            instance_id=inst.id, annotator_id=client.config.model_name,
            schema=schema.name, run=0, label=agg_label or "",
            rationale=None, resolved=agg_resolved))
        records.extend(inst_records)

    if failure is not None:
        raise BatchAbortedError(f"batch aborted: {failure}", records)
    return records


def write_annotations(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_record(), ensure_ascii=False) + "\n")


def read_annotations(path) -> list[AnnotationRecord]:
    records = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed record: {exc}") from exc
            try:
                ann = AnnotationRecord(
                    instance_id=str(rec["instance_id"]),
                    annotator_id=rec["annotator_id"],
                    schema=rec["schema"],
                    run=int(rec["run"]),
                    label=rec.get("label", ""),
                    rationale=rec.get("rationale"),
                    resolved=rec.get("resolved", "direct"),
                )
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            key = (ann.instance_id, ann.annotator_id, ann.schema, ann.run)
            if key in seen:
                raise ValueError(f"{path}:{lineno}: duplicate record key {key}")
            seen.add(key)
            records.append(ann)
    return records


def aggregated_labels(records, annotator_id=None) -> dict[str, str | None]:
    """Map instance_id -> aggregated label (run 0); None when unresolved."""
    out = {}
    for rec in records:
        if rec.run != 0:
            continue
        if annotator_id is not None and rec.annotator_id != annotator_id:
            continue
        out[rec.instance_id] = rec.label if rec.resolved != "unresolved" else None
    return out
