"""Pairwise constraint semantics, the inconsistency count, and active repair.

A ``ConsistencyLink`` stores the *forbidden* joint labels of an example
pair, canonicalized so ``first < second``. The predicate ``violates`` is 1
for inconsistent pairs; the utility ``alpha * P - I`` therefore penalizes
violations. Each unordered pair is counted once.

Two built-in link families mirror common claim structures:

* asymmetry -- a forward/reverse comparison pair cannot both be "True";
* answer_mismatch -- two solutions to the same problem with different
  final answers cannot both be "True".

Records may also declare ``custom`` links with an explicit forbidden set.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from random import Random
from typing import Iterable, Protocol, Sequence

from .data import Assignment, Dataset, LabelSpace

TRUE_TOKEN = "True"

KIND_ASYMMETRY = "asymmetry"
KIND_ANSWER_MISMATCH = "answer_mismatch"
KIND_CUSTOM = "custom"


@dataclass(frozen=True)
class ConsistencyLink:
    """A pairwise constraint. ``forbidden`` holds ordered label pairs
    (label-of-first, label-of-second); canonical form has first < second."""

    first: str
    second: str
    kind: str
    forbidden: frozenset[tuple[str, str]]

    def __post_init__(self):
        if self.first == self.second:
            raise ValueError("link endpoints must differ")
        if self.first > self.second:
            raise ValueError("link not in canonical order (first < second)")
        if not self.forbidden:
            raise ValueError("link forbids nothing")

    def other(self, ex_id: str) -> str:
        return self.second if ex_id == self.first else self.first


def make_link(a: str, b: str, kind: str, forbidden: Iterable[tuple[str, str]]) -> ConsistencyLink:
    """Build a canonical link from endpoints in either order; forbidden
    pairs are given as (label-of-a, label-of-b) and transposed if a, b swap."""
    pairs = {(str(x), str(y)) for x, y in forbidden}
    if a > b:
        a, b = b, a
        pairs = {(y, x) for x, y in pairs}
    return ConsistencyLink(first=a, second=b, kind=kind, forbidden=frozenset(pairs))


def derive_links(dataset: Dataset) -> list[ConsistencyLink]:
    """Derive all pairwise constraints from dataset metadata.

    Emits one asymmetry link per forward/reverse partner pair, one
    answer-mismatch link per unordered same-group pair with differing final
    answers, and the custom links declared on records (duplicate
    declarations of the same pair are merged by union of forbidden sets).
    The result is deterministic: sorted by id pair, then kind.
    """
    label_space = dataset.label_space
    both_true = [(TRUE_TOKEN, TRUE_TOKEN)]
    links: dict[tuple[str, str, str], ConsistencyLink] = {}

    def add(link: ConsistencyLink) -> None:
        key = (link.first, link.second, link.kind)
        prev = links.get(key)
        if prev is not None:
            link = ConsistencyLink(link.first, link.second, link.kind, prev.forbidden | link.forbidden)
        links[key] = link

    needs_true = any(
        ex.orientation is not None or ex.final_answer is not None for ex in dataset
    )
    if needs_true and TRUE_TOKEN not in label_space:
        raise ValueError(
            f"asymmetry/answer-mismatch constraints need a {TRUE_TOKEN!r} label in the label space"
        )

    for ex in dataset:
        if ex.orientation == "forward" and ex.partner_id is not None:
            add(make_link(ex.id, ex.partner_id, KIND_ASYMMETRY, both_true))
        for spec in ex.custom_links:
            add(make_link(ex.id, spec.other, KIND_CUSTOM, spec.forbidden))

    by_group: dict[str, list] = {}
    for ex in dataset:
        if ex.group_key is not None and ex.final_answer is not None:
            by_group.setdefault(ex.group_key, []).append(ex)
    for members in by_group.values():
        for ex_a, ex_b in itertools.combinations(members, 2):
            if ex_a.final_answer != ex_b.final_answer:
                add(make_link(ex_a.id, ex_b.id, KIND_ANSWER_MISMATCH, both_true))

    n_pairs = len(label_space) ** 2
    for link in links.values():
        if len(link.forbidden) >= n_pairs:
            raise ValueError(f"link {link.first}-{link.second} forbids every label pair")
    return sorted(links.values(), key=lambda lk: (lk.first, lk.second, lk.kind))


def violates(link: ConsistencyLink, label_first: str, label_second: str) -> bool:
    """True iff the joint label (label-of-first, label-of-second) is forbidden."""
    return (label_first, label_second) in link.forbidden


def inconsistency_count(assignment: Assignment, links: Sequence[ConsistencyLink]) -> int:
    """Number of links whose endpoints are both labeled with a forbidden
    joint label. Unlabeled endpoints contribute nothing."""
    count = 0
    for link in links:
        la = assignment.get(link.first)
        lb = assignment.get(link.second)
        if la is not None and lb is not None and violates(link, la, lb):
            count += 1
    return count


def inconsistent_pairs(assignment: Assignment, links: Sequence[ConsistencyLink]) -> list[ConsistencyLink]:
    """The violated links, in canonical order."""
    out = []
    for link in links:
        la = assignment.get(link.first)
        lb = assignment.get(link.second)
        if la is not None and lb is not None and violates(link, la, lb):
            out.append(link)
    return out


def consistent_options(link: ConsistencyLink, label_space: LabelSpace) -> list[tuple[str, str]]:
    """All joint labels not forbidden by the link, in label-space order
    with the first endpoint's label varying slowest."""
    return [
        (la, lb)
        for la in label_space
        for lb in label_space
        if (la, lb) not in link.forbidden
    ]


class UtilityScorer(Protocol):
    """What ``consistency_fix`` needs from a scorer: a utility evaluation
    bound to the dataset/predictor, plus journaling so candidate
    evaluations can be rolled back."""

    def utility(self, assignment: Assignment): ...

    def mark(self) -> object: ...

    def rollback(self, mark: object) -> None: ...


def default_fix_iterations(n_violated: int) -> int:
    """Repair budget scaling with current damage, never below 8."""
    return max(8, 10 * n_violated)


def consistency_fix(
    assignment: Assignment,
    links: Sequence[ConsistencyLink],
    scorer: UtilityScorer,
    rng: Random,
    max_iterations: int | None = None,
) -> Assignment:
    """Actively repair violated links, never decreasing utility.

    Each iteration samples one violated link uniformly (seeded rng),
    scores every consistent relabeling of its two endpoints, and applies
    the best one only if it strictly increases utility. The assignment is
    mutated in place and returned. Exhausting the iteration budget with
    violations remaining is a legal outcome.
    """
    label_space = scorer.label_space
    violated = inconsistent_pairs(assignment, links)
    if max_iterations is None:
        max_iterations = default_fix_iterations(len(violated))
    # Between applied changes the assignment is frozen, so re-scoring a link
    # that already failed to improve U is futile; skip it until something
    # changes, and stop early once every violated link has failed.
    failed: set[tuple[str, str, str]] = set()
    for _ in range(max_iterations):
        if not violated:
            break
        if all((lk.first, lk.second, lk.kind) in failed for lk in violated):
            break
        link = violated[rng.randrange(len(violated))]
        key = (link.first, link.second, link.kind)
        if key in failed:
            continue
        current = (assignment.get(link.first), assignment.get(link.second))
        base_u = scorer.utility(assignment).utility
        best_u = base_u
        best_option: tuple[str, str] | None = None
        for option in consistent_options(link, label_space):
            mark = scorer.mark()
            assignment.set(link.first, option[0])
            assignment.set(link.second, option[1])
            u = scorer.utility(assignment).utility
            assignment.set(link.first, current[0])
            assignment.set(link.second, current[1])
            scorer.rollback(mark)
            if u > best_u:
                best_u = u
                best_option = option
        if best_option is not None:
            assignment.set(link.first, best_option[0])
            assignment.set(link.second, best_option[1])
            scorer.utility(assignment)  # settle cached terms on the applied labels
            failed.clear()
        else:
            failed.add(key)
        violated = inconsistent_pairs(assignment, links)
    return assignment


class InconsistencyIndex:
    """Incidence index over links plus the violated set for one assignment
    version. Owned by the search loop; refreshed after committed changes."""

    def __init__(self, links: Sequence[ConsistencyLink]):
        self.links = list(links)
        self.links_by_example: dict[str, list[ConsistencyLink]] = {}
        for link in self.links:
            self.links_by_example.setdefault(link.first, []).append(link)
            self.links_by_example.setdefault(link.second, []).append(link)
        self.violated: list[ConsistencyLink] = []
        self.version: int | None = None

    def incident(self, ex_id: str) -> list[ConsistencyLink]:
        return self.links_by_example.get(ex_id, [])

    def neighbors(self, ex_id: str) -> frozenset[str]:
        return frozenset(link.other(ex_id) for link in self.incident(ex_id))

    def refresh(self, assignment: Assignment) -> None:
        self.violated = inconsistent_pairs(assignment, self.links)
        self.version = assignment.version
