"""Unsupervised label elicitation by coherence maximization.

The library searches for a label assignment over an unlabeled dataset
that maximizes ``alpha * (mutual predictability) - (inconsistency count)``
under a pluggable conditional-label-probability backend, using annealed
local search with active repair of violated pairwise constraints.
"""

from .consistency import (
    ConsistencyLink,
    InconsistencyIndex,
    consistency_fix,
    consistent_options,
    derive_links,
    inconsistency_count,
    inconsistent_pairs,
    violates,
)
from .data import (
    Assignment,
    Dataset,
    DatasetError,
    EvaluationError,
    Example,
    LabelSpace,
    accuracy,
    parse_dataset,
    serialize_dataset,
    serialize_labels,
)
from .harness import (
    Report,
    brute_force_optimum,
    generate_synthetic_task,
    perturb_labels,
    run_report,
    zero_shot_labels,
)
from .predictor import (
    ContextWindow,
    MajorityBiasOracle,
    PlantedConceptOracle,
    Prediction,
    SyntheticTaskSpec,
    UniformOracle,
    balanced_concept,
    build_context,
    make_oracle,
    render_prompt,
)
from .remote import BackendConfig, BackendError, RemotePredictor
from .scorer import ScoreBreakdown, Scorer, TermEntry
from .search import (
    RunResult,
    SearchConfig,
    TraceRecord,
    accept,
    finalize_labels,
    initialize,
    propose_label,
    run_icm,
    sample_target,
    temperature,
)

__version__ = "0.1.0"
