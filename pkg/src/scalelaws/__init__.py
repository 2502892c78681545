"""scalelaws: fit, compare, and extrapolate capacity-style scaling laws.

The package models test loss as a function of model size N, token count
D, and optionally a perturbation level X, using a registry of ten law
forms (a Shannon-capacity family plus classic power-law baselines). It
ships a deterministic multistart least-squares fitter, pooled R-squared
scoring, three held-out extrapolation protocols, loss-landscape grid
evaluation with basin detection, and an SNR-calibrated Gaussian weight
perturbation utility. See the `scalelaws` CLI for the orchestration
layer.
"""

__version__ = "0.1.0"

from .dataset import (
    Normalization,
    Observation,
    ObservationSet,
    distinct_axis_values,
    group_by_level,
    load_observations,
)
from .errors import (
    DataValidationError,
    FitError,
    LawDomainError,
    ScaleLawsError,
    SplitError,
    UndefinedVarianceError,
)
from .extrapolation import (
    ExtrapReport,
    SplitSpec,
    SweepTable,
    make_split,
    progressive_sweep,
    run_extrapolation,
)
from .fitter import FitConfig, FitResult, fit, local_solve, residuals
from .landscape import (
    BasinReport,
    ExponentReport,
    GridSpec,
    LossGrid,
    detect_basin,
    exponent_report,
    grid_eval,
    optimal_along_axis,
)
from .laws import (
    LAW_IDS,
    SHANNON_FAMILY,
    LawSpec,
    ParamVector,
    capacity,
    get_law,
    jacobian_fd,
    law_registry,
    predict_dataset,
    predict_loss,
    with_orientation,
)
from .metrics import EvalPairs, pooled_r_squared, r_squared, summarize_levels
from .perturb import (
    PerturbReport,
    WeightVector,
    inject,
    inject_segmented,
    measure_snr,
    noise_sigma2,
    read_weights_text,
    read_wvec,
    signal_power,
    write_weights_text,
    write_wvec,
)

__all__ = [
    "__version__",
    # dataset
    "Normalization", "Observation", "ObservationSet",
    "load_observations", "group_by_level", "distinct_axis_values",
    # errors
    "ScaleLawsError", "DataValidationError", "LawDomainError",
    "UndefinedVarianceError", "SplitError", "FitError",
    # laws
    "LAW_IDS", "SHANNON_FAMILY", "LawSpec", "ParamVector",
    "law_registry", "get_law", "with_orientation",
    "capacity", "predict_loss", "predict_dataset", "jacobian_fd",
    # fitter
    "FitConfig", "FitResult", "fit", "local_solve", "residuals",
    # metrics
    "EvalPairs", "r_squared", "pooled_r_squared", "summarize_levels",
    # extrapolation
    "SplitSpec", "ExtrapReport", "SweepTable",
    "make_split", "run_extrapolation", "progressive_sweep",
    # landscape
    "GridSpec", "LossGrid", "BasinReport", "ExponentReport",
    "grid_eval", "detect_basin", "optimal_along_axis", "exponent_report",
    # perturb
    "WeightVector", "PerturbReport",
    "signal_power", "noise_sigma2", "inject", "inject_segmented", "measure_snr",
    "read_wvec", "write_wvec", "read_weights_text", "write_weights_text",
]
