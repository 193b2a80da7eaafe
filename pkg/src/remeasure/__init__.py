"""Effect estimation and power analysis for confounded two-batch studies with remeasured controls."""

from .backend import HAVE_COMPILED, resolve_backend
from .baselines import fit_batch2, fit_ignore, fit_ls, fit_lsind, fit_naive
from .estimator import (
    CoefficientSystem,
    FitConfig,
    SufficientStats,
    coefficient_system,
    fit_generic,
    fit_mle,
    log_likelihood,
    score_vector,
    solve_rho,
    solve_sigma1,
    solve_sigma2,
    sufficient_stats,
    update_b,
    update_location,
)
from .inference import (
    TestResult,
    VarianceDecomposition,
    residual_bootstrap,
    variance_a0,
    z_test,
)
from .model import Dataset, FitResult, ParameterVector, StudyDesign, validate_dataset
from .power import (
    PowerQuery,
    PowerResult,
    min_remeasured,
    oracle_sd_a0,
    power_curve,
    theoretical_power,
)
from .simulate import (
    MCSummary,
    Scenario,
    generate_dataset,
    monte_carlo,
    run_method,
    scenario_from_json,
    scenario_to_json,
)

__version__ = "0.1.0"

__all__ = [
    "CoefficientSystem",
    "Dataset",
    "FitConfig",
    "FitResult",
    "HAVE_COMPILED",
    "MCSummary",
    "ParameterVector",
    "PowerQuery",
    "PowerResult",
    "Scenario",
    "StudyDesign",
    "SufficientStats",
    "TestResult",
    "VarianceDecomposition",
    "coefficient_system",
    "fit_batch2",
    "fit_generic",
    "fit_ignore",
    "fit_ls",
    "fit_lsind",
    "fit_mle",
    "fit_naive",
    "generate_dataset",
    "log_likelihood",
    "min_remeasured",
    "monte_carlo",
    "oracle_sd_a0",
    "power_curve",
    "residual_bootstrap",
    "run_method",
    "scenario_from_json",
    "scenario_to_json",
    "resolve_backend",
    "score_vector",
    "theoretical_power",
    "solve_rho",
    "solve_sigma1",
    "solve_sigma2",
    "sufficient_stats",
    "update_b",
    "update_location",
    "validate_dataset",
    "variance_a0",
    "z_test",
    "__version__",
]
