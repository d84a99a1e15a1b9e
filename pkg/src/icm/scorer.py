"""Mutual predictability, the combined utility, and per-term caching.

The utility of an assignment is ``alpha * P - I`` where ``P`` sums, over
labeled examples, the log-probability the predictor gives each label when
conditioned on the other labeled examples, and ``I`` counts violated
pairwise constraints.

Exact mode re-queries every labeled example per evaluation (L queries for
L labels). Cached mode keeps one term per labeled example and recomputes a
term only when that example's label changed, leaving other terms stale
until opportunistically refreshed; this is what keeps the per-iteration
cost near a couple of queries instead of O(N).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

from .consistency import ConsistencyLink, InconsistencyIndex, inconsistency_count
from .data import Assignment, Dataset, LabelSpace
from .predictor import Predictor, build_context

MODE_EXACT = "exact"
MODE_CACHED = "cached"

CACHED_VS_EXACT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ScoreBreakdown:
    """One utility evaluation: ``utility == alpha * mutual_predictability -
    inconsistency`` exactly, and the mode that produced it."""

    alpha: float
    mutual_predictability: float
    inconsistency: int
    utility: float
    mode: str

    def __post_init__(self):
        if self.mutual_predictability > 0.0:
            raise ValueError("mutual predictability is a sum of log-probabilities, <= 0")
        expected = self.alpha * self.mutual_predictability - self.inconsistency
        if self.utility != expected:
            raise ValueError("utility does not equal alpha * P - I")


@dataclass(frozen=True)
class TermEntry:
    """Cached log-term for one labeled example: the label it was computed
    for, the context fingerprint, and the refresh epoch it was sampled at."""

    label: str
    log_prob: float
    fingerprint: str
    epoch: int


class Scorer:
    """Utility evaluator bound to a dataset, links, predictor and alpha.

    In cached mode the scorer owns a ``TermCache`` (one ``TermEntry`` per
    labeled example) and a mutation journal so speculative evaluations made
    during repair or a rejected step can be rolled back bit-for-bit.
    """

    def __init__(
        self,
        dataset: Dataset,
        links: Sequence[ConsistencyLink],
        predictor: Predictor,
        alpha: float = 50.0,
        mode: str = MODE_CACHED,
        context_budget: int = 160,
        base_seed: int | str = 0,
        consistency_in_utility: bool = True,
    ):
        if mode not in (MODE_EXACT, MODE_CACHED):
            raise ValueError(f"unknown scoring mode {mode!r}")
        if context_budget < 1:
            raise ValueError("context_budget must be >= 1")
        self.dataset = dataset
        self.links = list(links)
        self.predictor = predictor
        self.alpha = alpha
        self.mode = mode
        self.context_budget = context_budget
        self.base_seed = base_seed
        self.consistency_in_utility = consistency_in_utility
        self.index = InconsistencyIndex(self.links)
        self._cache: dict[str, TermEntry] = {}
        self._journal: list[tuple[str, TermEntry | None]] = []
        self._epoch = 0

    @property
    def label_space(self) -> LabelSpace:
        return self.dataset.label_space

    # -- journaling --------------------------------------------------------

    def mark(self) -> tuple[int, int]:
        """Opaque journal position (entry count plus epoch counter)."""
        return (len(self._journal), self._epoch)

    def rollback(self, mark: tuple[int, int]) -> None:
        length, epoch = mark
        while len(self._journal) > length:
            ex_id, old = self._journal.pop()
            if old is None:
                self._cache.pop(ex_id, None)
            else:
                self._cache[ex_id] = old
        self._epoch = epoch

    def commit(self) -> None:
        """Discard journal history. Call only when no outstanding mark from
        an enclosing speculative evaluation is still held."""
        self._journal.clear()

    def _store(self, ex_id: str, entry: TermEntry) -> None:
        self._journal.append((ex_id, self._cache.get(ex_id)))
        self._cache[ex_id] = entry

    # -- term computation ---------------------------------------------------

    def _compute_term(self, ex_id: str, assignment: Assignment, epoch: int) -> TermEntry:
        target = self.dataset[ex_id]
        label = assignment.get(ex_id)
        assert label is not None
        window = build_context(
            self.dataset,
            assignment,
            target,
            self.context_budget,
            epoch_seed=f"{self.base_seed}|{epoch}",
            linked_ids=self.index.neighbors(ex_id),
        )
        prediction = self.predictor.label_distribution(window, target)
        return TermEntry(
            label=label,
            log_prob=prediction.log_prob(label),
            fingerprint=window.fingerprint(label),
            epoch=epoch,
        )

    def _ensure_terms(self, assignment: Assignment) -> None:
        for ex_id, label in assignment.items():
            entry = self._cache.get(ex_id)
            if entry is None or entry.label != label:
                self._epoch += 1
                self._store(ex_id, self._compute_term(ex_id, assignment, self._epoch))

    # -- public scoring surface ----------------------------------------------

    def mutual_predictability(self, assignment: Assignment) -> float:
        """Sum of per-example label log-probabilities (0 for an empty
        assignment). Exact mode issues exactly one query per labeled
        example; cached mode recomputes only stale terms."""
        if len(assignment) == 0:
            return 0.0
        if self.mode == MODE_EXACT:
            terms = []
            for ex_id in sorted(assignment.labeled_ids()):
                # exact terms share one epoch stream so repeated evaluations
                # of the same assignment see the same sampled contexts
                terms.append(self._compute_term(ex_id, assignment, epoch=0).log_prob)
            return math.fsum(terms)
        self._ensure_terms(assignment)
        return math.fsum(self._cache[ex_id].log_prob for ex_id in assignment.labeled_ids())

    def utility(self, assignment: Assignment) -> ScoreBreakdown:
        p = self.mutual_predictability(assignment)
        inconsistency = inconsistency_count(assignment, self.links)
        counted = inconsistency if self.consistency_in_utility else 0
        return ScoreBreakdown(
            alpha=self.alpha,
            mutual_predictability=p,
            inconsistency=counted,
            utility=self.alpha * p - counted,
            mode=self.mode,
        )

    # -- cache maintenance ----------------------------------------------------

    def refresh_term(self, ex_id: str, assignment: Assignment) -> bool:
        """Recompute one example's cached term under a fresh context sample.

        Returns True if a backend query was issued; a no-op (False) when
        the freshly built context fingerprints identically to the stored
        one. On predictor failure the old term stays in place.
        """
        label = assignment.get(ex_id)
        if label is None:
            raise ValueError(f"{ex_id} is not labeled")
        next_epoch = self._epoch + 1
        target = self.dataset[ex_id]
        window = build_context(
            self.dataset,
            assignment,
            target,
            self.context_budget,
            epoch_seed=f"{self.base_seed}|{next_epoch}",
            linked_ids=self.index.neighbors(ex_id),
        )
        fingerprint = window.fingerprint(label)
        entry = self._cache.get(ex_id)
        if entry is not None and entry.fingerprint == fingerprint:
            self._epoch = next_epoch
            self._store(ex_id, replace(entry, epoch=next_epoch))
            return False
        prediction = self.predictor.label_distribution(window, target)
        self._epoch = next_epoch
        self._store(
            ex_id,
            TermEntry(
                label=label,
                log_prob=prediction.log_prob(label),
                fingerprint=fingerprint,
                epoch=next_epoch,
            ),
        )
        return True

    def refresh_stalest(self, assignment: Assignment) -> str | None:
        """Refresh the term whose context sample is oldest (smallest epoch),
        bounding staleness drift at one query per call."""
        labeled = assignment.labeled_ids()
        if not labeled:
            return None
        self._ensure_terms(assignment)
        stalest = min(labeled, key=lambda ex_id: (self._cache[ex_id].epoch, ex_id))
        self.refresh_term(stalest, assignment)
        return stalest

    def refresh_all(self, assignment: Assignment) -> None:
        for ex_id in assignment.labeled_ids():
            self.refresh_term(ex_id, assignment)

    # -- checkpoint support -----------------------------------------------------

    def cache_state(self) -> dict:
        return {
            "epoch": self._epoch,
            "terms": {
                ex_id: {
                    "label": entry.label,
                    "log_prob": entry.log_prob,
                    "fingerprint": entry.fingerprint,
                    "epoch": entry.epoch,
                }
                for ex_id, entry in self._cache.items()
            },
        }

    def restore_cache_state(self, state: dict) -> None:
        self._epoch = state["epoch"]
        self._cache = {
            ex_id: TermEntry(
                label=item["label"],
                log_prob=item["log_prob"],
                fingerprint=item["fingerprint"],
                epoch=item["epoch"],
            )
            for ex_id, item in state["terms"].items()
        }
        self._journal = []
