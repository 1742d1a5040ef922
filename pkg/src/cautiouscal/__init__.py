"""Cautious calibration: high-probability lower bounds on calibration maps."""

from .baselines import (
    betacal_map,
    isobins_cp,
    isocal_map,
    logcal_map,
    pava_isotonic,
    rcir_cp,
    sva_lower,
)
from .datagen import (
    CalibrationSet,
    TrueCalibrationMap,
    gen_true_map,
    sample_calibration_set,
)
from .evaluation import (
    eval_independent_violation,
    eval_outcomes,
    eval_within_map_violation,
)
from .experiment import ExperimentConfig, run_experiment
from .htlb import (
    HtlbConfig,
    MaxCpTable,
    htlb_map,
    maxcp_statistic,
    precompute_maxcp_table,
)
from .maps import LowerBoundMap, apply_postproc
from .scenario import expected_outcome, optimal_risk, risk_levels
from .stats import (
    ConvergenceError,
    SeededRng,
    beta_quantile,
    binomial_cdf,
    cp_lower_bound,
    reg_inc_beta,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationSet",
    "ConvergenceError",
    "ExperimentConfig",
    "HtlbConfig",
    "LowerBoundMap",
    "MaxCpTable",
    "SeededRng",
    "TrueCalibrationMap",
    "apply_postproc",
    "beta_quantile",
    "betacal_map",
    "binomial_cdf",
    "cp_lower_bound",
    "eval_independent_violation",
    "eval_outcomes",
    "eval_within_map_violation",
    "expected_outcome",
    "gen_true_map",
    "htlb_map",
    "isobins_cp",
    "isocal_map",
    "logcal_map",
    "maxcp_statistic",
    "optimal_risk",
    "pava_isotonic",
    "precompute_maxcp_table",
    "rcir_cp",
    "reg_inc_beta",
    "risk_levels",
    "run_experiment",
    "sample_calibration_set",
    "sva_lower",
]
