"""Online familywise-error-rate control with adaptive discarding."""

from .engine import (
    BUDGET_EPS,
    EXHAUSTIVE,
    PLAIN,
    AdmissibilityError,
    BudgetState,
    StepOutcome,
    StepParams,
    ValidationReport,
    addis_step,
    exhaustive_addis_step,
    remark_special_step,
    validate_step,
)
from .policies import (
    PROCEDURES,
    ConfigError,
    GammaSequence,
    GraphWeights,
    PolicyConfig,
    RunAbort,
    RunTrace,
    build_policy,
    gamma_log_q,
    gamma_q_series,
    graph_recursion_levels,
    run_procedure,
)

__version__ = "0.1.0"
