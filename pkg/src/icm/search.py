"""Annealed search over label assignments.

One run initializes a seed set of random labels, then repeatedly: cools
the temperature, samples a target example (boosting unlabeled examples
that share a constraint with a labeled one), proposes the argmax label
from the predictor, repairs any inconsistencies the proposal introduced,
and accepts or rolls back the whole step by the Metropolis rule on the
utility change. Rejection restores assignment, term cache and index
exactly; the run is deterministic given (dataset, config, pure oracle)
and can checkpoint/resume at step boundaries.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time
from dataclasses import asdict, dataclass, field, replace
from random import Random
from typing import Sequence

from .consistency import (
    ConsistencyLink,
    InconsistencyIndex,
    consistency_fix,
    derive_links,
    inconsistency_count,
)
from .data import Assignment, Dataset, Example
from .predictor import Predictor, build_context
from .remote import BackendError
from .scorer import MODE_CACHED, MODE_EXACT, Scorer

INIT_RANDOM = "random"
INIT_GOLDEN = "golden"
INIT_WORST = "worst"
_INIT_REGIMES = (INIT_RANDOM, INIT_GOLDEN, INIT_WORST)

CHECKPOINT_FORMAT = "icm-checkpoint-v1"


class CheckpointError(ValueError):
    """Raised for unreadable, mismatched, or corrupt checkpoints."""


@dataclass(frozen=True)
class SearchConfig:
    """Knobs of one labeling run. ``iterations=None`` resolves to the
    dataset size (one proposal per example on average)."""

    k_init: int = 8
    t0: float = 10.0
    t_min: float = 0.01
    beta: float = 0.99
    alpha: float = 50.0
    iterations: int | None = None
    weight_factor: float = 100.0
    seed: int = 0
    fix_iterations: int | None = None
    scoring_mode: str = MODE_CACHED
    context_budget: int = 160
    init_regime: str = INIT_RANDOM
    consistency_in_utility: bool = True
    checkpoint_every: int = 100
    halt_after_steps: int | None = None

    def __post_init__(self):
        if not (self.t0 > self.t_min > 0):
            raise ValueError("need t0 > t_min > 0")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.k_init < 0:
            raise ValueError("k_init must be >= 0")
        if self.weight_factor < 1:
            raise ValueError("weight_factor must be >= 1")
        if self.scoring_mode not in (MODE_EXACT, MODE_CACHED):
            raise ValueError(f"unknown scoring mode {self.scoring_mode!r}")
        if self.init_regime not in _INIT_REGIMES:
            raise ValueError(f"init_regime must be one of {_INIT_REGIMES}")
        if self.iterations is not None and self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    temperature: float
    target_id: str
    proposed_label: str
    delta_u: float
    accepted: bool
    utility: float
    mutual_predictability: float
    inconsistency_after: int
    labeled_count: int
    forward_passes: int
    rng_fingerprint: str


@dataclass
class RunResult:
    """Outcome of (possibly one leg of) a labeling run."""

    assignment: Assignment
    trace: list[TraceRecord]
    wall_clock: float
    forward_passes: int
    completed: bool
    next_iteration: int
    config: SearchConfig
    links: list[ConsistencyLink] = field(default_factory=list)


def temperature(n: int, config: SearchConfig) -> float:
    """Cooling schedule: max(t_min, t0 / (1 + beta * ln n)) for the 1-based
    iteration counter n. Natural logarithm; the base only rescales beta."""
    if n < 1:
        raise ValueError("iteration counter is 1-based")
    return max(config.t_min, config.t0 / (1.0 + config.beta * math.log(n)))


def accept(delta_u: float, t: float, rng: Random) -> bool:
    """Metropolis rule: improvements always pass, worsenings pass with
    probability exp(delta_u / t)."""
    if t <= 0:
        raise ValueError("temperature must be positive")
    if delta_u > 0:
        return True
    return rng.random() < math.exp(delta_u / t)


def sample_target(
    dataset: Dataset,
    assignment: Assignment,
    index: InconsistencyIndex,
    config: SearchConfig,
    rng: Random,
) -> str:
    """Weighted draw over all examples, labeled or not. Unlabeled examples
    sharing a link with a labeled one get ``weight_factor``; everything
    else weighs 1."""
    ids = dataset.ids()
    weights = []
    for ex_id in ids:
        boosted = ex_id not in assignment and any(
            other in assignment for other in index.neighbors(ex_id)
        )
        weights.append(config.weight_factor if boosted else 1.0)
    total = math.fsum(weights)
    pick = rng.random() * total
    acc = 0.0
    for ex_id, w in zip(ids, weights):
        acc += w
        if pick < acc:
            return ex_id
    return ids[-1]


def propose_label(
    dataset: Dataset,
    assignment: Assignment,
    target: Example,
    predictor: Predictor,
    config: SearchConfig,
    index: InconsistencyIndex,
    epoch_seed: str,
) -> str:
    """Argmax label for the target conditioned on all other labeled
    examples (the target never sees itself). Ties break to the first label
    in label-space order."""
    window = build_context(
        dataset,
        assignment,
        target,
        config.context_budget,
        epoch_seed=epoch_seed,
        linked_ids=index.neighbors(target.id),
    )
    prediction = predictor.label_distribution(window, target)
    return prediction.argmax(dataset.label_space.labels)


def initial_labels(dataset: Dataset, config: SearchConfig, rng: Random) -> Assignment:
    """Pick k_init examples without replacement and label them per the
    init regime: random draws, golden labels, or golden flipped (worst)."""
    if config.k_init > len(dataset):
        raise ValueError(f"k_init={config.k_init} exceeds dataset size {len(dataset)}")
    chosen = rng.sample(dataset.ids(), config.k_init)
    assignment = Assignment()
    labels = dataset.label_space.labels
    if config.init_regime == INIT_RANDOM:
        for ex_id in chosen:
            assignment.set(ex_id, labels[rng.randrange(len(labels))])
        return assignment
    golden = dataset.golden_labels()
    missing = sorted(ex_id for ex_id in chosen if ex_id not in golden)
    if missing:
        raise ValueError(
            f"{config.init_regime} initialization needs golden labels; missing for {missing}"
        )
    if config.init_regime == INIT_WORST and len(labels) != 2:
        raise ValueError("worst initialization (flipped golden) needs a binary label space")
    for ex_id in chosen:
        gold = golden[ex_id]
        if config.init_regime == INIT_GOLDEN:
            assignment.set(ex_id, gold)
        else:
            assignment.set(ex_id, labels[1] if gold == labels[0] else labels[0])
    return assignment


def initialize(
    dataset: Dataset,
    config: SearchConfig,
    rng: Random,
    scorer: Scorer,
    links: Sequence[ConsistencyLink],
) -> Assignment:
    """Initial labels followed by a repair pass over any violated links."""
    assignment = initial_labels(dataset, config, rng)
    consistency_fix(assignment, links, scorer, rng, config.fix_iterations)
    return assignment


def finalize_labels(
    dataset: Dataset,
    assignment: Assignment,
    predictor: Predictor,
    config: SearchConfig,
    index: InconsistencyIndex,
) -> int:
    """Argmax-label every still-unlabeled example (one query each), in
    dataset order, so emitted label files cover every input id."""
    added = 0
    for ex in dataset:
        if ex.id in assignment:
            continue
        label = propose_label(
            dataset, assignment, ex, predictor, config, index,
            epoch_seed=f"{config.seed}|final|{ex.id}",
        )
        assignment.set(ex.id, label)
        added += 1
    return added


def _rng_fingerprint(rng: Random) -> str:
    return hashlib.sha256(repr(rng.getstate()).encode("ascii")).hexdigest()[:12]


def _rng_state_to_json(state) -> list:
    version, internal, gauss = state
    return [version, list(internal), gauss]


def _rng_state_from_json(data) -> tuple:
    version, internal, gauss = data
    return (version, tuple(internal), gauss)


def write_checkpoint(path: str, payload: dict) -> None:
    """Atomic write: temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".ckpt-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            json.dump(payload, handle)
            handle.write("\n")
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def load_checkpoint(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            payload = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"unrecognized checkpoint format in {path}")
    return payload


class _RunState:
    """Mutable innards of one run leg, shared by fresh starts and resumes."""

    def __init__(
        self,
        config: SearchConfig,
        rng: Random,
        assignment: Assignment,
        u_current: float,
        p_current: float,
        next_iteration: int,
        trace: list[TraceRecord],
        wall_clock: float,
    ):
        self.config = config
        self.rng = rng
        self.assignment = assignment
        self.u_current = u_current
        self.p_current = p_current
        self.next_iteration = next_iteration
        self.trace = trace
        self.wall_clock = wall_clock


def _checkpoint_payload(
    state: _RunState,
    scorer: Scorer,
    predictor: Predictor,
    meta: dict | None,
    rng_state,
    next_iteration: int,
    forward_passes: int,
    wall_clock: float,
    completed: bool,
) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(state.config),
        "meta": meta or {},
        "next_iteration": next_iteration,
        "rng_state": _rng_state_to_json(rng_state),
        "assignment": {"labels": state.assignment.as_dict(), "version": state.assignment.version},
        "cache": scorer.cache_state(),
        "u_current": state.u_current,
        "p_current": state.p_current,
        "forward_passes": forward_passes,
        "wall_clock": wall_clock,
        "trace": [asdict(record) for record in state.trace],
        "completed": completed,
    }


def _restore_state(dataset: Dataset, predictor: Predictor, scorer: Scorer, payload: dict) -> _RunState:
    config = SearchConfig(**payload["config"])
    rng = Random()
    rng.setstate(_rng_state_from_json(payload["rng_state"]))
    assignment = Assignment(payload["assignment"]["labels"], payload["assignment"]["version"])
    for ex_id in assignment.labeled_ids():
        if ex_id not in dataset:
            raise CheckpointError(f"checkpoint labels unknown example {ex_id!r}")
    scorer.restore_cache_state(payload["cache"])
    if hasattr(predictor, "restore_forward_passes"):
        predictor.restore_forward_passes(payload["forward_passes"])
    trace = [TraceRecord(**record) for record in payload["trace"]]
    return _RunState(
        config=config,
        rng=rng,
        assignment=assignment,
        u_current=payload["u_current"],
        p_current=payload["p_current"],
        next_iteration=payload["next_iteration"],
        trace=trace,
        wall_clock=payload["wall_clock"],
    )


def run_icm(
    dataset: Dataset,
    predictor: Predictor,
    config: SearchConfig,
    *,
    links: Sequence[ConsistencyLink] | None = None,
    checkpoint_path: str | None = None,
    checkpoint_meta: dict | None = None,
    resume_from: dict | None = None,
) -> RunResult:
    """Run the full labeling search and return the final assignment plus
    the complete trace.

    ``resume_from`` takes a loaded checkpoint payload and continues the run
    at the stored iteration with the stored RNG state; under pure oracles
    the result equals an uninterrupted run. A backend failure mid-step
    flushes a resumable checkpoint (when a path is given) and re-raises.
    """
    if links is None:
        links = derive_links(dataset)
    links = list(links)

    if len(dataset) == 0:
        empty_config = config if config.iterations is not None else replace(config, iterations=0)
        return RunResult(
            assignment=Assignment(),
            trace=[],
            wall_clock=0.0,
            forward_passes=predictor.forward_passes,
            completed=True,
            next_iteration=1,
            config=empty_config,
            links=links,
        )

    scorer = Scorer(
        dataset,
        links,
        predictor,
        alpha=config.alpha,
        mode=config.scoring_mode,
        context_budget=config.context_budget,
        base_seed=config.seed,
        consistency_in_utility=config.consistency_in_utility,
    )

    started = time.monotonic()
    if resume_from is not None:
        state = _restore_state(dataset, predictor, scorer, resume_from)
        if resume_from.get("completed"):
            return RunResult(
                assignment=state.assignment,
                trace=state.trace,
                wall_clock=state.wall_clock,
                forward_passes=predictor.forward_passes,
                completed=True,
                next_iteration=state.next_iteration,
                config=state.config,
                links=links,
            )
        config = state.config
    else:
        if config.iterations is None:
            config = replace(config, iterations=len(dataset))
        rng = Random(config.seed)
        assignment = initialize(dataset, config, rng, scorer, links)
        scorer.commit()
        initial = scorer.utility(assignment)
        state = _RunState(
            config=config,
            rng=rng,
            assignment=assignment,
            u_current=initial.utility,
            p_current=initial.mutual_predictability,
            next_iteration=1,
            trace=[],
            wall_clock=0.0,
        )

    scorer.index.refresh(state.assignment)
    fix_budget = state.config.fix_iterations
    total_iterations = state.config.iterations or 0
    rng = state.rng
    steps_this_leg = 0
    halted = False

    def elapsed() -> float:
        return state.wall_clock + (time.monotonic() - started)

    def flush(rng_state, next_iteration: int, forward_passes: int, completed: bool) -> None:
        if checkpoint_path is None:
            return
        payload = _checkpoint_payload(
            state, scorer, predictor, checkpoint_meta,
            rng_state, next_iteration, forward_passes, elapsed(), completed,
        )
        write_checkpoint(checkpoint_path, payload)

    n = state.next_iteration
    while n <= total_iterations:
        step_rng_state = rng.getstate()
        step_passes = predictor.forward_passes
        step_mark = scorer.mark()
        try:
            t = temperature(n, state.config)
            target_id = sample_target(dataset, state.assignment, scorer.index, state.config, rng)
            target = dataset[target_id]
            proposed = propose_label(
                dataset, state.assignment, target, predictor, state.config, scorer.index,
                epoch_seed=f"{state.config.seed}|prop|{n}",
            )
            tentative = state.assignment.clone()
            tentative.set(target_id, proposed)
            consistency_fix(tentative, links, scorer, rng, fix_budget)
            breakdown = scorer.utility(tentative)
            delta_u = breakdown.utility - state.u_current
            accepted = accept(delta_u, t, rng)
            if accepted:
                state.assignment = tentative
                state.u_current = breakdown.utility
                state.p_current = breakdown.mutual_predictability
                scorer.index.refresh(state.assignment)
                if state.config.scoring_mode == MODE_CACHED:
                    scorer.refresh_stalest(state.assignment)
                    settled = scorer.utility(state.assignment)
                    state.u_current = settled.utility
                    state.p_current = settled.mutual_predictability
            else:
                scorer.rollback(step_mark)
            scorer.commit()
        except BackendError:
            scorer.rollback(step_mark)
            flush(step_rng_state, n, step_passes, completed=False)
            raise
        state.trace.append(
            TraceRecord(
                iteration=n,
                temperature=t,
                target_id=target_id,
                proposed_label=proposed,
                delta_u=delta_u,
                accepted=accepted,
                utility=state.u_current,
                mutual_predictability=state.p_current,
                inconsistency_after=inconsistency_count(state.assignment, links),
                labeled_count=len(state.assignment),
                forward_passes=predictor.forward_passes,
                rng_fingerprint=_rng_fingerprint(rng),
            )
        )
        state.next_iteration = n + 1
        steps_this_leg += 1
        if n % state.config.checkpoint_every == 0 and n < total_iterations:
            flush(rng.getstate(), n + 1, predictor.forward_passes, completed=False)
        if (
            state.config.halt_after_steps is not None
            and steps_this_leg >= state.config.halt_after_steps
            and n < total_iterations
        ):
            halted = True
            flush(rng.getstate(), n + 1, predictor.forward_passes, completed=False)
            break
        n += 1

    completed = not halted
    if completed:
        flush(rng.getstate(), state.next_iteration, predictor.forward_passes, completed=True)
    return RunResult(
        assignment=state.assignment,
        trace=state.trace,
        wall_clock=elapsed(),
        forward_passes=predictor.forward_passes,
        completed=completed,
        next_iteration=state.next_iteration,
        config=state.config,
        links=links,
    )
