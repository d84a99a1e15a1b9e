"""Conditional label-probability backends and context construction.

A predictor answers one question: given a context of (example, label)
pairs and a target example, how probable is each label for the target?
The remote backend (see ``icm.remote``) reads label log-probabilities
from an inference service at temperature zero; the synthetic oracles here
are exactly computable stand-ins used for testing and desk-scale
experiments.
"""

from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass, field
from random import Random
from typing import Mapping, Protocol, Sequence

from .data import Assignment, Dataset, Example, LabelSpace

NORMALIZATION_TOLERANCE = 1e-6

#: Weight an off-concept context label still contributes toward predicting
#: the target's concept label in the planted oracle. Demonstrations with
#: wrong labels still tell the model *which task it is doing*, so they count
#: as partial evidence (> 0.5 keeps the concept recoverable even when every
#: context label is wrong, which is what a salient concept means here).
OFF_CONCEPT_EVIDENCE = 0.75

ORACLE_PLANTED = "planted_concept"
ORACLE_MAJORITY = "majority_bias"
ORACLE_NON_SALIENT = "non_salient"
_ORACLE_MODES = (ORACLE_PLANTED, ORACLE_MAJORITY, ORACLE_NON_SALIENT)


@dataclass(frozen=True)
class Prediction:
    """Per-label log-probabilities for one query. The exponentials must sum
    to 1 within ``NORMALIZATION_TOLERANCE``."""

    log_probs: Mapping[str, float]
    forward_pass_cost: int = 1

    def __post_init__(self):
        total = sum(math.exp(lp) for lp in self.log_probs.values())
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            raise ValueError(f"prediction not normalized: probabilities sum to {total}")

    def log_prob(self, label: str) -> float:
        return self.log_probs[label]

    def prob(self, label: str) -> float:
        return math.exp(self.log_probs[label])

    def argmax(self, label_order: Sequence[str]) -> str:
        """Most probable label; ties break toward the earliest label in
        ``label_order``."""
        best = None
        best_lp = -math.inf
        for label in label_order:
            lp = self.log_probs[label]
            if lp > best_lp:
                best = label
                best_lp = lp
        assert best is not None
        return best


@dataclass(frozen=True)
class ContextWindow:
    """Ordered (example, label) pairs conditioning a query. The target is
    never a member of its own window."""

    pairs: tuple[tuple[Example, str], ...]
    budget: int

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be non-negative")
        if len(self.pairs) > self.budget:
            raise ValueError("context exceeds budget")

    def __len__(self) -> int:
        return len(self.pairs)

    def fingerprint(self, target_label: str | None = None) -> str:
        """Stable digest of the window content (and optionally the target
        label a cached term was computed for)."""
        payload = "\x1f".join(f"{ex.id}={label}" for ex, label in self.pairs)
        if target_label is not None:
            payload += f"\x1e{target_label}"
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


EMPTY_CONTEXT = ContextWindow(pairs=(), budget=0)


def build_context(
    dataset: Dataset,
    assignment: Assignment,
    target: Example,
    budget: int,
    epoch_seed: str | int,
    linked_ids: frozenset[str] = frozenset(),
) -> ContextWindow:
    """Deterministically select the labeled examples conditioning a query.

    All labeled examples except the target are used, in assignment
    insertion order, when they fit the budget. Over budget, examples
    consistency-linked to the target come first, then a seeded uniform
    sample of the rest; insertion order is preserved within each tier.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    labeled = [(ex_id, label) for ex_id, label in assignment.items() if ex_id != target.id]
    if len(labeled) <= budget:
        chosen = labeled
    else:
        tier_linked = [(ex_id, label) for ex_id, label in labeled if ex_id in linked_ids]
        tier_rest = [(ex_id, label) for ex_id, label in labeled if ex_id not in linked_ids]
        chosen = tier_linked[:budget]
        slots = budget - len(chosen)
        if slots > 0:
            rng = Random(f"{epoch_seed}|ctx|{target.id}")
            picked = set(rng.sample(range(len(tier_rest)), slots))
            chosen = chosen + [pair for i, pair in enumerate(tier_rest) if i in picked]
    pairs = tuple((dataset[ex_id], label) for ex_id, label in chosen)
    return ContextWindow(pairs=pairs, budget=budget)


def render_prompt(window: ContextWindow, target: Example) -> str:
    """Render context blocks and the target claim into one prompt.

    Each context pair renders as its claim text followed by the label
    token; blocks are separated by blank lines; the target block comes
    last and ends at the label slot.
    """
    blocks = [f"{ex.claim_text} {label}" for ex, label in window.pairs]
    blocks.append(target.claim_text)
    return "\n\n".join(blocks)


@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Recipe for an exactly-scoreable synthetic labeling task."""

    size: int
    planted_seed: int
    oracle_mode: str = ORACLE_PLANTED
    smoothing: float = 1.0
    link_fraction: float = 0.0

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("size must be >= 2")
        if self.oracle_mode not in _ORACLE_MODES:
            raise ValueError(f"oracle_mode must be one of {_ORACLE_MODES}")
        if self.smoothing <= 0:
            raise ValueError("smoothing must be positive")
        if not 0.0 <= self.link_fraction <= 1.0:
            raise ValueError("link_fraction must be in [0, 1]")


class Predictor(Protocol):
    """The conditional-label-probability contract."""

    label_space: LabelSpace
    name: str

    @property
    def forward_passes(self) -> int: ...

    def label_distribution(self, context: ContextWindow, target: Example) -> Prediction: ...


class CountingPredictor:
    """Base predictor with an atomically incremented forward-pass counter."""

    name = "predictor"

    def __init__(self, label_space: LabelSpace | None = None):
        self.label_space = label_space or LabelSpace()
        self._passes = 0
        self._lock = threading.Lock()

    @property
    def forward_passes(self) -> int:
        return self._passes

    def restore_forward_passes(self, value: int) -> None:
        with self._lock:
            self._passes = value

    def _tick(self) -> None:
        with self._lock:
            self._passes += 1

    def label_distribution(self, context: ContextWindow, target: Example) -> Prediction:
        raise NotImplementedError


class UniformOracle(CountingPredictor):
    """Indifferent predictor: every label equally likely, always."""

    name = "uniform"

    def label_distribution(self, context: ContextWindow, target: Example) -> Prediction:
        self._tick()
        lp = -math.log(len(self.label_space))
        return Prediction(log_probs={label: lp for label in self.label_space})


def balanced_concept(seed: int | str, ids: Sequence[str], label_space: LabelSpace | None = None) -> dict[str, str]:
    """A hidden binary labeling function over a fixed id set.

    Ids are ranked by a seeded digest and the top half gets the first
    label, so the concept is exactly balanced and reproducible from
    (seed, id set) alone.
    """
    label_space = label_space or LabelSpace()
    if len(label_space) != 2:
        raise ValueError("balanced_concept assumes a binary label space")
    ranked = sorted(
        ids,
        key=lambda ex_id: hashlib.sha256(f"{seed}|concept|{ex_id}".encode("utf-8")).hexdigest(),
    )
    half = len(ranked) // 2
    first, second = label_space.labels
    concept = {ex_id: first for ex_id in ranked[:half]}
    concept.update({ex_id: second for ex_id in ranked[half:]})
    return concept


class PlantedConceptOracle(CountingPredictor):
    """Oracle for a model to whom a hidden binary concept is salient.

    The probability of the target's concept label is Laplace-smoothed
    evidence over the context: pairs labeled per the concept count 1,
    off-concept pairs count ``OFF_CONCEPT_EVIDENCE``:

        P(concept label) = (s + k + w * (n - k)) / (2 s + n)

    with ``k`` the agreeing pair count, ``n`` the context length and ``s``
    the smoothing constant. An empty context yields 0.5/0.5, and a fully
    agreeing context yields (s + n) / (2 s + n), the classic Laplace rule.
    """

    name = "planted_concept"

    def __init__(
        self,
        concept: Mapping[str, str],
        label_space: LabelSpace | None = None,
        smoothing: float = 1.0,
        off_concept_evidence: float = OFF_CONCEPT_EVIDENCE,
    ):
        super().__init__(label_space)
        if len(self.label_space) != 2:
            raise ValueError("planted oracle assumes a binary label space")
        if smoothing <= 0:
            raise ValueError("smoothing must be positive")
        if not 0.0 <= off_concept_evidence <= 1.0:
            raise ValueError("off_concept_evidence must be in [0, 1]")
        self.concept = dict(concept)
        self.smoothing = smoothing
        self.off_concept_evidence = off_concept_evidence

    def label_distribution(self, context: ContextWindow, target: Example) -> Prediction:
        self._tick()
        s = self.smoothing
        n = len(context)
        k = sum(1 for ex, label in context.pairs if self.concept[ex.id] == label)
        p_concept = (s + k + self.off_concept_evidence * (n - k)) / (2 * s + n)
        concept_label = self.concept[target.id]
        other = next(lab for lab in self.label_space if lab != concept_label)
        return Prediction(
            log_probs={concept_label: math.log(p_concept), other: math.log1p(-p_concept)}
        )


class MajorityBiasOracle(CountingPredictor):
    """Degenerate-attractor oracle: predicts whatever label dominates the
    context, ignoring the target entirely. All-same labelings maximize its
    mutual predictability, which is what the consistency term must block."""

    name = "majority_bias"

    def __init__(self, label_space: LabelSpace | None = None, smoothing: float = 1.0):
        super().__init__(label_space)
        if smoothing <= 0:
            raise ValueError("smoothing must be positive")
        self.smoothing = smoothing

    def label_distribution(self, context: ContextWindow, target: Example) -> Prediction:
        self._tick()
        s = self.smoothing
        n = len(context)
        denom = len(self.label_space) * s + n
        counts = {label: 0 for label in self.label_space}
        for _, label in context.pairs:
            counts[label] += 1
        return Prediction(
            log_probs={label: math.log((s + counts[label]) / denom) for label in self.label_space}
        )


def make_oracle(spec: SyntheticTaskSpec, ids: Sequence[str], label_space: LabelSpace | None = None) -> CountingPredictor:
    """Instantiate the predictor a ``SyntheticTaskSpec`` calls for.

    ``non_salient`` uses the planted-oracle machinery but with a hidden
    concept drawn from an independent seed stream, so its predictions
    carry no information about the task's planted labels (or its links).
    """
    label_space = label_space or LabelSpace()
    if spec.oracle_mode == ORACLE_MAJORITY:
        return MajorityBiasOracle(label_space, smoothing=spec.smoothing)
    if spec.oracle_mode == ORACLE_NON_SALIENT:
        concept = balanced_concept(f"{spec.planted_seed}|hidden", ids, label_space)
    else:
        concept = balanced_concept(spec.planted_seed, ids, label_space)
    return PlantedConceptOracle(concept, label_space, smoothing=spec.smoothing)
