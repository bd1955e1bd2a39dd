"""Linear-regression inference corrected for data-driven outlier removal.

Detect outliers with Cook's distance, DFFITS or the soft-IPOD lasso;
characterize the detection outcome as an exact event on the response;
and draw p-values, confidence intervals and prediction intervals from
normal, chi-squared and F distributions truncated to that event, next to
the classical "detect and forget" baselines.
"""

from .errors import NumericalError, ValidationError
from .linalg import Dataset, OlsFit, fit_ols, make_dataset, validate_dataset
from .intervals import IntervalSet, combine_interval_sets, solve_quadratic_sign_set
from .geometry import (
    QuadraticConstraint,
    SelectionEvent,
    affine_constraint,
    event_membership,
    slice_event_on_f_curve,
    slice_event_on_line,
)
from .truncated import (
    TruncatedChi2,
    TruncatedF,
    TruncatedNormal,
    gaussian_interval_mass,
    tn_mean_solve,
)
from .detection import (
    DetectionConfig,
    DetectionResult,
    detect,
    detect_cooks,
    detect_dffits,
    soft_ipod_event,
    solve_soft_ipod,
)
from .inference import (
    ContrastSpec,
    InferenceReport,
    analyze,
    estimate_sigma_aug_lasso,
    group_chi2_test,
    make_contrast,
    naive_coefficient_inference,
    naive_group_f_test,
    prediction_interval,
    selective_f_test,
    selective_z_inference,
    two_sided,
)
from .datasets import load_hills, load_stackloss

__version__ = "0.1.0"

__all__ = [
    "ContrastSpec",
    "Dataset",
    "DetectionConfig",
    "DetectionResult",
    "InferenceReport",
    "IntervalSet",
    "NumericalError",
    "OlsFit",
    "QuadraticConstraint",
    "SelectionEvent",
    "TruncatedChi2",
    "TruncatedF",
    "TruncatedNormal",
    "ValidationError",
    "affine_constraint",
    "analyze",
    "combine_interval_sets",
    "detect",
    "detect_cooks",
    "detect_dffits",
    "estimate_sigma_aug_lasso",
    "event_membership",
    "fit_ols",
    "gaussian_interval_mass",
    "group_chi2_test",
    "load_hills",
    "load_stackloss",
    "make_contrast",
    "make_dataset",
    "naive_coefficient_inference",
    "naive_group_f_test",
    "prediction_interval",
    "selective_f_test",
    "selective_z_inference",
    "slice_event_on_f_curve",
    "slice_event_on_line",
    "soft_ipod_event",
    "solve_soft_ipod",
    "tn_mean_solve",
    "two_sided",
    "validate_dataset",
]
