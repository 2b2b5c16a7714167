"""Citation label schemas: built-in label sets, validation, and cross-schema mapping.

Four schemas ship with the package:

* ``soft-intent``   -- 7 citation intent labels (what the citing author does)
* ``soft-content``  -- 3 cited content type labels (what kind of thing is cited)
* ``acl-arc``       -- the classic 6-type citation function inventory
* ``scicite``       -- the condensed 3-type inventory

Labels are compared after canonicalization (lowercase, alphanumerics only),
so free-text model output like "evaluate against" matches ``EvaluateAgainst``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field


class SchemaError(Exception):
    """Base class for schema problems."""


class UnknownSchemaError(SchemaError):
    """Requested schema name is not a known schema."""


class LabelValidationError(SchemaError):
    """A label is not a member of the schema it was used with."""


_CANON_RE = re.compile(r"[^a-z0-9]+")


def canonicalize(label: str) -> str:
    """Lowercase and strip non-alphanumeric characters for label comparison."""
    return _CANON_RE.sub("", label.lower())


@dataclass(frozen=True)
class LabelDef:
    id: str
    display_name: str
    definition: str
    decision_rules: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise SchemaError("label id must be non-empty")
        if not self.definition:
            raise SchemaError(f"label {self.id!r} has an empty definition")


@dataclass(frozen=True)
class LabelSchema:
    name: str
    dimension: str  # "intent" or "content"
    labels: tuple[LabelDef, ...]
    _canon: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if self.dimension not in ("intent", "content"):
            raise SchemaError(f"bad dimension {self.dimension!r}")
        canon = {}
        for ld in self.labels:
            key = canonicalize(ld.id)
            if not key:
                raise SchemaError(f"label {ld.id!r} canonicalizes to empty string")
            if key in canon:
                raise SchemaError(
                    f"schema {self.name!r}: labels {canon[key]!r} and {ld.id!r} "
                    "collide after canonicalization"
                )
            canon[key] = ld.id
        object.__setattr__(self, "_canon", canon)

    def label_ids(self) -> list[str]:
        """Label identifiers in stable declared order."""
        return [ld.id for ld in self.labels]

    def resolve(self, label: str) -> str | None:
        """Return the schema's canonical id for ``label``, or None if unknown."""
        return self._canon.get(canonicalize(label))

    def __contains__(self, label: str) -> bool:
        return self.resolve(label) is not None


@dataclass(frozen=True)
class SchemaMapping:
    source: str
    target: str
    pairs: tuple[tuple[str, str], ...]

    def as_dict(self) -> dict[str, str]:
        return dict(self.pairs)


def builtin_schema(name: str) -> LabelSchema:
    """Return one of the four built-in schemas by name.

    Raises UnknownSchemaError for anything else.
    """
    try:
        return _BUILTIN[name]
    except KeyError:
        raise UnknownSchemaError(
            f"unknown schema {name!r}; known: {', '.join(sorted(_BUILTIN))}"
        ) from None


def schema_names() -> list[str]:
    return sorted(_BUILTIN)


def validate_label(schema: LabelSchema, label: str) -> bool:
    """True iff ``label`` is a member of ``schema`` (after canonicalization)."""
    return label in schema


def list_labels(schema: LabelSchema) -> list[str]:
    """Label identifiers in stable declared order."""
    return schema.label_ids()


def map_label(mapping: SchemaMapping, label: str) -> str:
    """Translate ``label`` through ``mapping``; the label must be a source label."""
    source = builtin_schema(mapping.source)
    resolved = source.resolve(label)
    if resolved is None:
        raise LabelValidationError(
            f"label {label!r} is not valid in schema {mapping.source!r}"
        )
    return mapping.as_dict()[resolved]


def load_schema_file(path) -> dict[str, LabelSchema]:
    """Load schema-override records (one JSON object per line).

    Each record carries ``schema``, ``id``, ``display_name``, ``definition``
    and ``rules`` (list of strings). Records sharing a ``schema`` value are
    collected in file order into one LabelSchema; the dimension is taken from
    the like-named built-in when one exists, else defaults to "intent".
    """
    grouped: dict[str, list[LabelDef]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: malformed record: {exc}") from exc
            try:
                grouped.setdefault(rec["schema"], []).append(
                    LabelDef(
                        id=rec["id"],
                        display_name=rec.get("display_name", rec["id"]),
                        definition=rec["definition"],
                        decision_rules=tuple(rec.get("rules", ())),
                    )
                )
            except KeyError as exc:
                raise SchemaError(f"{path}:{lineno}: missing field {exc}") from exc
    out = {}
    for name, labels in grouped.items():
        dim = _BUILTIN[name].dimension if name in _BUILTIN else "intent"
        out[name] = LabelSchema(name=name, dimension=dim, labels=tuple(labels))
    return out


def _ld(id, display, definition, *rules):
    return LabelDef(id=id, display_name=display, definition=definition,
                    decision_rules=tuple(rules))


SOFT_INTENT = LabelSchema(
    name="soft-intent",
    dimension="intent",
    labels=(
        _ld("Contextualize", "Contextualize",
            "The cited work is mentioned to provide background, illustrate prior "
            "research, or describe related contributions.",
            "No design decision or reuse by the citing authors is involved."),
        _ld("SignalGap", "Signal gap",
            "The citation points at an unresolved problem or open question.",
            "The gap may be identified by either the cited or the citing work.",
            "No commitment to solving the gap is required."),
        _ld("HighlightLimitation", "Highlight limitation",
            "A flaw, constraint, or drawback of the cited method or result is "
            "identified.",
            "Applies only when the cited contribution is explicitly critiqued."),
        _ld("JustifyDesignChoice", "Justify design choice",
            "The citing work supports a design or methodological decision by "
            "referencing the cited work.",
            "No direct reuse is required, but the authors must commit to a choice.",
            "Does not apply when the action is merely hypothetical "
            "(e.g. 'we could follow ...')."),
        _ld("Use", "Use",
            "The citing work directly applies a reusable contribution (model, "
            "process, settings, definitions) from the cited work.",
            "The citing author must be the actor; '[cited work] used ...' does "
            "not qualify.",
            "Only past or present-tense application counts; planned or "
            "hypothetical use does not."),
        _ld("Modify", "Modify",
            "The citing work alters or extends a reusable contribution from the "
            "cited work, e.g. adapting configurations, changing algorithms, or "
            "integrating it into a new pipeline."),
        _ld("EvaluateAgainst", "Evaluate against",
            "The citing work explicitly compares its own findings or results "
            "with those of the cited work, typically to establish effectiveness."),
    ),
)

SOFT_CONTENT = LabelSchema(
    name="soft-content",
    dimension="content",
    labels=(
        _ld("PerformedWork", "Performed work",
            "The citing work references what the cited work did (e.g. an "
            "experimental process or pipeline design) without isolating "
            "specific outcomes or reusable resources."),
        _ld("Discovery", "Discovery",
            "The citing work references observations, findings, or theoretical "
            "conclusions made by the cited work."),
        _ld("ProducedResource", "Produced resource",
            "The citing work references reusable outputs such as datasets, "
            "algorithms, models, tools, metrics, or standardized settings."),
    ),
)

ACL_ARC = LabelSchema(
    name="acl-arc",
    dimension="intent",
    labels=(
        _ld("Background", "Background",
            "The cited work provides relevant background information or is part "
            "of the body of literature."),
        _ld("ComparisonContrast", "Comparison or Contrast",
            "The citing work expresses similarities or differences to the cited "
            "work."),
        _ld("Motivation", "Motivation",
            "The cited work illustrates a need for the current work, e.g. a "
            "problem it addresses."),
        _ld("Uses", "Uses",
            "The citing work uses a method, tool, or dataset from the cited "
            "work."),
        _ld("Extension", "Extension",
            "The citing work extends a method, tool, or dataset from the cited "
            "work."),
        _ld("Future", "Future",
            "The cited work is a potential avenue for future work."),
    ),
)

SCICITE = LabelSchema(
    name="scicite",
    dimension="intent",
    labels=(
        _ld("Background", "Background",
            "The citation provides background information or context."),
        _ld("Method", "Method",
            "The citing work makes use of a method, tool, or dataset from the "
            "cited work."),
        _ld("ResultComparison", "Result comparison",
            "The citing work compares its results or findings with those of the "
            "cited work."),
    ),
)

_BUILTIN = {s.name: s for s in (SOFT_INTENT, SOFT_CONTENT, ACL_ARC, SCICITE)}

# The one built-in cross-schema mapping: the 6-type inventory collapsed onto
# the 3-type one. Total over the source, surjective onto the target.
ACL_ARC_TO_SCICITE = SchemaMapping(
    source="acl-arc",
    target="scicite",
    pairs=(
        ("Uses", "Method"),
        ("ComparisonContrast", "ResultComparison"),
        ("Background", "Background"),
        ("Extension", "Background"),
        ("Motivation", "Background"),
        ("Future", "Background"),
    ),
)

_BUILTIN_MAPPINGS = {("acl-arc", "scicite"): ACL_ARC_TO_SCICITE}


def builtin_mapping(source: str, target: str) -> SchemaMapping:
    try:
        return _BUILTIN_MAPPINGS[(source, target)]
    except KeyError:
        raise UnknownSchemaError(
            f"no built-in mapping from {source!r} to {target!r}"
        ) from None
