"""Dataset model, JSONL ingestion, and golden-label evaluation.

A dataset is a list of claim records plus a fixed label space. Records may
carry pairing metadata (``partner_id``/``orientation`` for comparative
claims, ``group_key``/``final_answer`` for grouped solutions, and explicit
``custom_links``) from which pairwise constraints are derived elsewhere.

Golden labels are parsed from the same file but are *not* stored on the
``Example`` objects that the search and scoring code sees. They live in a
private map on the ``Dataset`` and are only reachable through
``Dataset.golden_labels()`` / ``Dataset.golden_label_of()``, so labeling
code cannot read them by accident.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping


class DatasetError(ValueError):
    """Raised when a record stream violates the dataset contract.

    ``line`` is the 1-based line number of the offending record, when the
    error is attributable to a single line.
    """

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class EvaluationError(ValueError):
    """Raised when golden-label accuracy cannot be computed."""


@dataclass(frozen=True)
class LabelSpace:
    """Ordered, duplicate-free label tokens. Order is fixed for a run;
    argmax tie-breaking and option enumeration depend on it."""

    labels: tuple[str, ...] = ("True", "False")

    def __post_init__(self):
        if len(self.labels) < 2:
            raise ValueError("label space needs at least 2 labels")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("label space contains duplicate labels")

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def __iter__(self) -> Iterator[str]:
        return iter(self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def first(self) -> str:
        return self.labels[0]

    def index(self, label: str) -> int:
        return self.labels.index(label)


@dataclass(frozen=True)
class CustomLinkSpec:
    """An explicit pairwise constraint attached to a record: the named
    partner and the forbidden joint labels, ordered (this record, other)."""

    other: str
    forbidden: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class Example:
    """One claim instance.

    ``claim_text`` is the fully rendered claim, ending just before the
    label slot, so a labeled rendering is ``claim_text + " " + label``.
    """

    id: str
    claim_text: str
    group_key: str | None = None
    final_answer: str | None = None
    partner_id: str | None = None
    orientation: str | None = None  # "forward" | "reverse"
    custom_links: tuple[CustomLinkSpec, ...] = field(default=())


_ORIENTATIONS = ("forward", "reverse")

_RECORD_FIELDS = {
    "id",
    "claim",
    "group_key",
    "final_answer",
    "partner_id",
    "orientation",
    "golden_label",
    "custom_links",
    # present in label output files; accepted on re-ingestion
    "label",
    "source",
}


class Dataset:
    """Immutable collection of examples plus the label space.

    Construction validates all invariants: unique ids, resolvable partner
    references with opposite orientations, and ``final_answer`` implying
    ``group_key``.
    """

    def __init__(
        self,
        examples: Iterable[Example],
        label_space: LabelSpace | None = None,
        golden: Mapping[str, str] | None = None,
    ):
        self.examples: tuple[Example, ...] = tuple(examples)
        self.label_space = label_space or LabelSpace()
        self._by_id: dict[str, Example] = {}
        self._golden: dict[str, str] = dict(golden or {})
        for ex in self.examples:
            if ex.id in self._by_id:
                raise DatasetError(f"duplicate id {ex.id!r}")
            self._by_id[ex.id] = ex
        for ex in self.examples:
            self._check_example(ex)
        for ex_id, label in self._golden.items():
            if ex_id not in self._by_id:
                raise DatasetError(f"golden label for unknown id {ex_id!r}")
            if label not in self.label_space:
                raise DatasetError(f"golden label {label!r} for {ex_id!r} not in label space")

    def _check_example(self, ex: Example) -> None:
        if ex.orientation is not None and ex.orientation not in _ORIENTATIONS:
            raise DatasetError(f"{ex.id}: orientation must be one of {_ORIENTATIONS}")
        if ex.orientation is not None and ex.partner_id is None:
            raise DatasetError(f"{ex.id}: orientation without partner_id")
        if ex.partner_id is not None:
            partner = self._by_id.get(ex.partner_id)
            if partner is None:
                raise DatasetError(f"{ex.id}: dangling partner {ex.partner_id!r}")
            if ex.partner_id == ex.id:
                raise DatasetError(f"{ex.id}: example is its own partner")
            if ex.orientation is not None:
                expected = "reverse" if ex.orientation == "forward" else "forward"
                if partner.partner_id != ex.id or partner.orientation != expected:
                    raise DatasetError(
                        f"{ex.id}: partner {ex.partner_id!r} does not point back with "
                        f"orientation {expected!r}"
                    )
        if ex.final_answer is not None and ex.group_key is None:
            raise DatasetError(f"{ex.id}: final_answer without group_key")
        for spec in ex.custom_links:
            if spec.other not in self._by_id:
                raise DatasetError(f"{ex.id}: custom link to unknown id {spec.other!r}")
            if spec.other == ex.id:
                raise DatasetError(f"{ex.id}: custom link to itself")
            for pair in spec.forbidden:
                if len(pair) != 2 or any(lab not in self.label_space for lab in pair):
                    raise DatasetError(f"{ex.id}: custom link pair {pair!r} not in label space")

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self) -> Iterator[Example]:
        return iter(self.examples)

    def __getitem__(self, ex_id: str) -> Example:
        return self._by_id[ex_id]

    def __contains__(self, ex_id: str) -> bool:
        return ex_id in self._by_id

    def ids(self) -> list[str]:
        return [ex.id for ex in self.examples]

    # -- evaluation-only surface ------------------------------------------
    # Labeling code must never call these; tests enforce that with a
    # tracing double patched over golden_labels/golden_label_of.

    def golden_labels(self) -> dict[str, str]:
        """Evaluation-only: map of example id to golden label."""
        return dict(self._golden)

    def golden_label_of(self, ex_id: str) -> str | None:
        """Evaluation-only: golden label of one example, if any."""
        return self._golden.get(ex_id)


class Assignment:
    """Partial map from example id to label token, owned by the search loop.

    Keys keep insertion order (context windows are built in that order) and
    ``version`` increments on every mutation.
    """

    def __init__(self, labels: Mapping[str, str] | None = None, version: int = 0):
        self._labels: dict[str, str] = dict(labels or {})
        self.version = version

    def set(self, ex_id: str, label: str) -> None:
        self._labels[ex_id] = label
        self.version += 1

    def get(self, ex_id: str) -> str | None:
        return self._labels.get(ex_id)

    def __contains__(self, ex_id: str) -> bool:
        return ex_id in self._labels

    def __len__(self) -> int:
        return len(self._labels)

    def items(self) -> Iterator[tuple[str, str]]:
        return iter(self._labels.items())

    def labeled_ids(self) -> list[str]:
        return list(self._labels)

    def clone(self) -> "Assignment":
        return Assignment(self._labels, self.version)

    def as_dict(self) -> dict[str, str]:
        return dict(self._labels)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Assignment):
            return NotImplemented
        return self._labels == other._labels

    def __repr__(self) -> str:
        return f"Assignment({len(self._labels)} labeled, version={self.version})"


def _parse_record(raw: str, line_no: int, label_space: LabelSpace) -> tuple[Example, str | None]:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"malformed record: {exc.msg}", line=line_no) from exc
    if not isinstance(obj, dict):
        raise DatasetError("record is not an object", line=line_no)
    unknown = set(obj) - _RECORD_FIELDS
    if unknown:
        raise DatasetError(f"unknown fields {sorted(unknown)}", line=line_no)
    for req in ("id", "claim"):
        if req not in obj:
            raise DatasetError(f"missing required field {req!r}", line=line_no)
        if not isinstance(obj[req], str):
            raise DatasetError(f"field {req!r} must be a string", line=line_no)
    for opt in ("group_key", "final_answer", "partner_id", "orientation", "golden_label"):
        if opt in obj and not isinstance(obj[opt], str):
            raise DatasetError(f"field {opt!r} must be a string", line=line_no)
    custom: list[CustomLinkSpec] = []
    for entry in obj.get("custom_links", []):
        if not isinstance(entry, dict) or "other" not in entry or "forbidden" not in entry:
            raise DatasetError("custom_links entries need 'other' and 'forbidden'", line=line_no)
        try:
            forbidden = tuple((str(a), str(b)) for a, b in entry["forbidden"])
        except (TypeError, ValueError) as exc:
            raise DatasetError("custom link 'forbidden' must be label pairs", line=line_no) from exc
        if not forbidden:
            raise DatasetError("custom link with empty forbidden set", line=line_no)
        custom.append(CustomLinkSpec(other=str(entry["other"]), forbidden=forbidden))
    golden = obj.get("golden_label")
    if golden is not None and golden not in label_space:
        raise DatasetError(f"golden_label {golden!r} not in label space", line=line_no)
    example = Example(
        id=obj["id"],
        claim_text=obj["claim"],
        group_key=obj.get("group_key"),
        final_answer=obj.get("final_answer"),
        partner_id=obj.get("partner_id"),
        orientation=obj.get("orientation"),
        custom_links=tuple(custom),
    )
    return example, golden


def parse_dataset(record_stream: str | Iterable[str], label_space: LabelSpace | None = None) -> Dataset:
    """Parse a line-delimited record stream into a ``Dataset``.

    The whole stream is rejected on any violation; there are no partial
    loads. Errors carry the offending line number where applicable.
    """
    label_space = label_space or LabelSpace()
    if isinstance(record_stream, str):
        lines: Iterable[str] = record_stream.splitlines()
    else:
        lines = record_stream
    examples: list[Example] = []
    golden: dict[str, str] = {}
    seen: set[str] = set()
    for line_no, raw in enumerate(lines, start=1):
        raw = raw.strip()
        if not raw:
            continue
        example, gold = _parse_record(raw, line_no, label_space)
        if example.id in seen:
            raise DatasetError(f"duplicate id {example.id!r}", line=line_no)
        seen.add(example.id)
        examples.append(example)
        if gold is not None:
            golden[example.id] = gold
    return Dataset(examples, label_space, golden)


def _record_dict(dataset: Dataset, ex: Example) -> dict:
    obj: dict = {"id": ex.id, "claim": ex.claim_text}
    if ex.group_key is not None:
        obj["group_key"] = ex.group_key
    if ex.final_answer is not None:
        obj["final_answer"] = ex.final_answer
    if ex.partner_id is not None:
        obj["partner_id"] = ex.partner_id
    if ex.orientation is not None:
        obj["orientation"] = ex.orientation
    if ex.custom_links:
        obj["custom_links"] = [
            {"other": spec.other, "forbidden": [list(pair) for pair in spec.forbidden]}
            for spec in ex.custom_links
        ]
    gold = dataset.golden_label_of(ex.id)
    if gold is not None:
        obj["golden_label"] = gold
    return obj


def serialize_dataset(dataset: Dataset) -> str:
    """Render a dataset back to its line-delimited form (round-trips with
    ``parse_dataset``)."""
    lines = [json.dumps(_record_dict(dataset, ex), ensure_ascii=False) for ex in dataset]
    return "\n".join(lines) + ("\n" if lines else "")


def serialize_labels(dataset: Dataset, assignment: Assignment, source: str = "icm") -> str:
    """Render labeled output records: the input format plus ``label`` and
    ``source`` fields, in dataset order. Unlabeled examples are skipped."""
    lines = []
    for ex in dataset:
        label = assignment.get(ex.id)
        if label is None:
            continue
        obj = _record_dict(dataset, ex)
        obj["label"] = label
        obj["source"] = source
        lines.append(json.dumps(obj, ensure_ascii=False))
    return "\n".join(lines) + ("\n" if lines else "")


def accuracy(assignment: Assignment, dataset: Dataset) -> float:
    """Fraction of golden-labeled examples whose assigned label matches.

    Every example carrying a golden label must be labeled; raises
    ``EvaluationError`` otherwise, listing the missing ids.
    """
    golden = dataset.golden_labels()
    if not golden:
        raise EvaluationError("no golden labels")
    missing = sorted(ex_id for ex_id in golden if ex_id not in assignment)
    if missing:
        raise EvaluationError(f"golden-labeled examples missing labels: {missing}")
    hits = sum(1 for ex_id, gold in golden.items() if assignment.get(ex_id) == gold)
    return hits / len(golden)
