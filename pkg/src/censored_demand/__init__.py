"""Censorship-aware demand prediction.

Two-stage censored estimators built on four learner families, simplex-weighted
stacking, SKU-panel bootstrap inference and a synthetic censored-demand
generator with known ground truth.
"""
__version__ = "0.1.0"

from .censored import (  # noqa: E402
    CensoredModel,
    CensoredRegressor,
    classify_rows,
    fit_censored,
    fit_uncensored,
    predict_censored,
)
from .datamodel import (  # noqa: E402
    DataValidationError,
    Dataset,
    DesignEncoder,
    DesignMatrix,
    EncodingPlan,
    SplitIndices,
    build_design,
    load_dataset,
    make_split,
    write_dataset,
)
from .dgp import DgpConfig, GroundTruth, generate, true_marginal_effect  # noqa: E402
from .ensemble import EnsembleModel, fit_ensemble, fit_weights, predict_ensemble  # noqa: E402
from .evaluation import (  # noqa: E402
    BootstrapResult,
    MarginalEffectEstimate,
    bootstrap_rmse_diff,
    marginal_effect,
    rmse,
)

__all__ = [
    "CensoredModel", "CensoredRegressor", "classify_rows", "fit_censored", "fit_uncensored",
    "predict_censored", "DataValidationError", "Dataset", "DesignEncoder", "DesignMatrix",
    "EncodingPlan", "SplitIndices", "build_design", "load_dataset", "make_split",
    "write_dataset", "DgpConfig", "GroundTruth", "generate", "true_marginal_effect",
    "EnsembleModel", "fit_ensemble", "fit_weights", "predict_ensemble", "BootstrapResult",
    "MarginalEffectEstimate", "bootstrap_rmse_diff", "marginal_effect", "rmse",
]
