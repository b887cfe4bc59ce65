"""hybridid: discovery of hybrid dynamical systems from time-series data.

Identifies how many subsystems generated a sampled trajectory, the sparse
dynamics of each, and the logic governing switches between them; the
discovered models can be simulated, evaluated and monitored online.
"""

__version__ = "0.1.0"

from ._core import USING_COMPILED
from .benchmarks import BENCHMARK_NAMES, generate_benchmark
from .config import RunConfig
from .dictionary import (
    CustomTerm,
    DesignMatrix,
    DictionarySpec,
    TimeSeries,
    build_design_matrix,
    normalize_columns,
)
from .errors import (
    IdentificationError,
    InseparableTransitionError,
    ModeBudgetError,
    NoConsensusError,
)
from .modeldoc import document_to_model, load_document, model_to_document, save_document
from .monitor import MonitorConfig, SwitchEvent, model_diff, monitor_step, start_monitor
from .simulate import (
    HybridModel,
    SimResult,
    one_step_predictions,
    relative_error_ratio,
    segmentation_accuracy,
    simulate,
)
from .solvers import (
    ResidualSplit,
    SolverConfig,
    solve_coefficient_sparse,
    solve_residual_sparse,
    solve_sparse_logistic,
)
from .subsystems import (
    PeelLimits,
    Segmentation,
    SubsystemModel,
    classify_rows,
    identify_subsystems,
    merge_equivalent,
)
from .transitions import (
    MembershipTrace,
    TransitionRule,
    infer_transitions,
    predicate_eval,
    rule_to_string,
)

__all__ = [
    "BENCHMARK_NAMES",
    "CustomTerm",
    "DesignMatrix",
    "DictionarySpec",
    "HybridModel",
    "IdentificationError",
    "InseparableTransitionError",
    "MembershipTrace",
    "ModeBudgetError",
    "MonitorConfig",
    "NoConsensusError",
    "PeelLimits",
    "ResidualSplit",
    "RunConfig",
    "Segmentation",
    "SimResult",
    "SolverConfig",
    "SubsystemModel",
    "SwitchEvent",
    "TimeSeries",
    "TransitionRule",
    "USING_COMPILED",
    "build_design_matrix",
    "classify_rows",
    "document_to_model",
    "generate_benchmark",
    "identify_subsystems",
    "infer_transitions",
    "load_document",
    "merge_equivalent",
    "model_diff",
    "model_to_document",
    "monitor_step",
    "normalize_columns",
    "one_step_predictions",
    "predicate_eval",
    "relative_error_ratio",
    "rule_to_string",
    "save_document",
    "segmentation_accuracy",
    "simulate",
    "solve_coefficient_sparse",
    "solve_residual_sparse",
    "solve_sparse_logistic",
    "start_monitor",
]
