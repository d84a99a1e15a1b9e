"""Synthetic task generation, brute-force verification, ablation baselines,
and run reporting.

Synthetic tasks plant a balanced hidden concept over templated claims and
optionally pair a fraction of examples into comparison partners whose
planted labels respect the pair constraint (exactly one "True" per pair,
so no planted violation and an exactly balanced label marginal). Because
the planted map and the matching oracle both derive from
``balanced_concept(planted_seed, ids)``, a dataset written to disk can be
re-labeled later by reconstructing the oracle from the seed alone.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass
from random import Random
from typing import Mapping, Sequence

from .consistency import derive_links, inconsistency_count
from .data import Assignment, CustomLinkSpec, Dataset, Example, LabelSpace
from .predictor import (
    EMPTY_CONTEXT,
    Predictor,
    SyntheticTaskSpec,
    balanced_concept,
)
from .scorer import Scorer
from .search import TraceRecord

BRUTE_FORCE_MAX_SIZE = 16


def generate_synthetic_task(
    spec: SyntheticTaskSpec,
    exclusive_pairs: bool = False,
) -> tuple[Dataset, dict[str, str]]:
    """Build a synthetic dataset and return it with its planted label map.

    A ``link_fraction`` of examples is paired into forward/reverse
    comparison partners; each pair joins one planted-"True" example with
    one planted-"False" example, so planted labels violate no link. With
    ``exclusive_pairs`` the pair constraint is instead declared as a custom
    link forbidding both same-label outcomes (used by the
    degenerate-collapse ablation, where both all-same poles must be
    inconsistent). Deterministic from ``planted_seed``. Planted labels are
    also stored as the dataset's golden labels.
    """
    label_space = LabelSpace()
    ids = [f"ex-{i:04d}" for i in range(spec.size)]
    concept = balanced_concept(spec.planted_seed, ids, label_space)
    rng = Random(f"{spec.planted_seed}|task")
    true_label, false_label = label_space.labels

    n_pairs = int(round(spec.link_fraction * spec.size / 2))
    true_ids = [ex_id for ex_id in ids if concept[ex_id] == true_label]
    false_ids = [ex_id for ex_id in ids if concept[ex_id] == false_label]
    rng.shuffle(true_ids)
    rng.shuffle(false_ids)
    n_pairs = min(n_pairs, len(true_ids), len(false_ids))

    partner: dict[str, str] = {}
    orientation: dict[str, str] = {}
    custom: dict[str, tuple[CustomLinkSpec, ...]] = {}
    for i in range(n_pairs):
        a, b = true_ids[i], false_ids[i]
        if rng.random() < 0.5:
            a, b = b, a
        if exclusive_pairs:
            forbidden = ((true_label, true_label), (false_label, false_label))
            custom[a] = (CustomLinkSpec(other=b, forbidden=forbidden),)
        else:
            partner[a], partner[b] = b, a
            orientation[a], orientation[b] = "forward", "reverse"

    examples = []
    for idx, ex_id in enumerate(ids):
        if ex_id in partner or ex_id in custom:
            mate = partner.get(ex_id) or custom[ex_id][0].other
            claim = (
                f"Comparison {idx:04d}: candidate {ex_id} ranks above candidate {mate}."
                "\nI think this Claim is"
            )
        else:
            claim = f"Statement {idx:04d}: item {ex_id} satisfies the hidden property.\nI think this Claim is"
        examples.append(
            Example(
                id=ex_id,
                claim_text=claim,
                partner_id=partner.get(ex_id),
                orientation=orientation.get(ex_id),
                custom_links=custom.get(ex_id, ()),
            )
        )
    dataset = Dataset(examples, label_space, golden=concept)
    return dataset, dict(concept)


def brute_force_optimum(dataset: Dataset, scorer: Scorer) -> tuple[Assignment, float]:
    """Exhaustively score every complete assignment and return a maximizer
    and its utility. Ties break lexicographically by label-space order over
    sorted ids. Feasible only at toy sizes; requires an exact scorer."""
    if len(dataset) > BRUTE_FORCE_MAX_SIZE:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_MAX_SIZE} examples, got {len(dataset)}")
    if scorer.mode != "exact":
        raise ValueError("brute force needs an exact-mode scorer")
    ids = sorted(dataset.ids())
    best: Assignment | None = None
    best_u = -math.inf
    for combo in itertools.product(dataset.label_space.labels, repeat=len(ids)):
        candidate = Assignment(dict(zip(ids, combo)))
        u = scorer.utility(candidate).utility
        if u > best_u:
            best = candidate
            best_u = u
    assert best is not None
    return best, best_u


def perturb_labels(
    golden: Mapping[str, str],
    target_accuracy: float,
    seed: int,
    label_space: LabelSpace | None = None,
) -> dict[str, str]:
    """Flip exactly ``round((1 - target_accuracy) * N)`` golden labels,
    chosen uniformly without replacement, so the output accuracy equals
    ``round(target_accuracy * N) / N`` exactly. Binary label spaces only."""
    label_space = label_space or LabelSpace()
    if len(label_space) != 2:
        raise ValueError("perturb_labels needs a binary label space (flip undefined otherwise)")
    if not 0.0 <= target_accuracy <= 1.0:
        raise ValueError("target_accuracy must be in [0, 1]")
    first, second = label_space.labels
    ids = sorted(golden)
    n_flips = round((1.0 - target_accuracy) * len(ids))
    rng = Random(seed)
    flipped = set(rng.sample(ids, n_flips))
    return {
        ex_id: (second if golden[ex_id] == first else first) if ex_id in flipped else golden[ex_id]
        for ex_id in golden
    }


def zero_shot_labels(dataset: Dataset, predictor: Predictor) -> Assignment:
    """Label every example independently with an empty context (argmax,
    ties to the first label). This is the zero-context baseline the
    no-initial-labels degenerate setting reduces to."""
    assignment = Assignment()
    for ex in dataset:
        prediction = predictor.label_distribution(EMPTY_CONTEXT, ex)
        assignment.set(ex.id, prediction.argmax(dataset.label_space.labels))
    return assignment


@dataclass(frozen=True)
class Report:
    """Run summary. Accuracy fields are None when the corresponding
    reference labels are unavailable (or not fully covered)."""

    accuracy_vs_golden: float | None
    accuracy_vs_planted: float | None
    final_utility: float | None
    final_mutual_predictability: float | None
    final_inconsistency: int
    best_utility: float | None
    acceptance_rate: float | None
    avg_forward_passes: float | None
    label_balance: dict[str, float]
    labeled_count: int
    wall_clock: float

    def to_summary(self) -> str:
        """Flat key=value rendering, stable for golden-file diffing."""
        lines = []
        for key, value in asdict(self).items():
            if isinstance(value, dict):
                for label, fraction in value.items():
                    lines.append(f"{key}.{label}={fraction!r}")
            else:
                lines.append(f"{key}={value!r}")
        return "\n".join(lines) + "\n"


def _accuracy_against(assignment: Assignment, reference: Mapping[str, str]) -> float | None:
    if not reference:
        return None
    if any(ex_id not in assignment for ex_id in reference):
        return None
    hits = sum(1 for ex_id, label in reference.items() if assignment.get(ex_id) == label)
    return hits / len(reference)


def run_report(
    trace: Sequence[TraceRecord],
    assignment: Assignment,
    dataset: Dataset,
    planted: Mapping[str, str] | None = None,
    wall_clock: float = 0.0,
    forward_passes: int | None = None,
) -> Report:
    """Compute every report field from a persisted trace and final
    assignment; regeneration from the same inputs is bit-identical.

    ``forward_passes`` overrides the trace's cumulative query count when
    queries were issued after the last traced step (label finalization).
    """
    links = derive_links(dataset)
    labeled = len(assignment)
    balance = {label: 0.0 for label in dataset.label_space}
    if labeled:
        for _, label in assignment.items():
            balance[label] += 1.0
        balance = {label: count / labeled for label, count in balance.items()}

    acceptance_rate = None
    avg_forward = None
    final_u = None
    final_p = None
    best_u = None
    if trace:
        acceptance_rate = sum(1 for rec in trace if rec.accepted) / len(trace)
        total_queries = forward_passes if forward_passes is not None else trace[-1].forward_passes
        if labeled:
            avg_forward = total_queries / labeled
        final_u = trace[-1].utility
        final_p = trace[-1].mutual_predictability
        best_u = max(rec.utility for rec in trace)

    return Report(
        accuracy_vs_golden=_accuracy_against(assignment, dataset.golden_labels()),
        accuracy_vs_planted=_accuracy_against(assignment, planted or {}),
        final_utility=final_u,
        final_mutual_predictability=final_p,
        final_inconsistency=inconsistency_count(assignment, links),
        best_utility=best_u,
        acceptance_rate=acceptance_rate,
        avg_forward_passes=avg_forward,
        label_balance=balance,
        labeled_count=labeled,
        wall_clock=wall_clock,
    )


def save_trace(path: str, trace: Sequence[TraceRecord], wall_clock: float) -> None:
    payload = {"wall_clock": wall_clock, "records": [asdict(rec) for rec in trace]}
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle)
        handle.write("\n")


def load_trace(path: str) -> tuple[list[TraceRecord], float]:
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    return [TraceRecord(**rec) for rec in payload["records"]], payload["wall_clock"]
