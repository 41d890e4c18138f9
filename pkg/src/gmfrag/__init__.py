"""Seismic fragility surrogates for stochastic ground motion models.

The package couples a site-based stochastic ground motion generator
(gamma-modulated, high-pass filtered Kanai-Tajimi spectrum) with a
nonlinear Bouc-Wen shear-frame solver, and fits stochastic polynomial
chaos expansions plus classical baselines (log-linear cloud model,
probit classifier, kernel conditional CDF estimator) to emulate the
conditional distribution of the peak interstory drift and the derived
fragility functions.
"""

from gmfrag.ground_motion import (
    AccelTimeSeries,
    GroundMotionParams,
    ModulatingParams,
    ParamsJointModel,
    SynthesisConfig,
    compute_ims,
    fit_modulating,
    kt_psd,
    sample_params,
    synthesize,
)
from gmfrag.structure import (
    BoucWenParams,
    ResponseRecord,
    ShearFrameModel,
    bw_rate,
    fundamental_period,
    integrate,
    max_interstory_drift,
    restoring_force,
)
from gmfrag.transforms import (
    InputTransform,
    MultiIndex,
    TruncationSet,
    basis_eval,
    build_truncation,
    hermite,
)
from gmfrag.spce import Dataset, FitConfig, SpceModel, fit_spce
from gmfrag.baselines import (
    KcdeModel,
    LinearModel,
    ProbitModel,
    kcde_fit,
    lm_fit,
    probit_fit,
)
from gmfrag.metrics import (
    EmpiricalDistribution,
    ValidationBundle,
    empirical_ccdf,
    fragility_rel_mse,
    normalized_ws_error,
    wasserstein2_sq,
)

__all__ = [
    "AccelTimeSeries",
    "GroundMotionParams",
    "ModulatingParams",
    "ParamsJointModel",
    "SynthesisConfig",
    "compute_ims",
    "fit_modulating",
    "kt_psd",
    "sample_params",
    "synthesize",
    "BoucWenParams",
    "ResponseRecord",
    "ShearFrameModel",
    "bw_rate",
    "fundamental_period",
    "integrate",
    "max_interstory_drift",
    "restoring_force",
    "InputTransform",
    "MultiIndex",
    "TruncationSet",
    "basis_eval",
    "build_truncation",
    "hermite",
    "Dataset",
    "FitConfig",
    "SpceModel",
    "fit_spce",
    "KcdeModel",
    "LinearModel",
    "ProbitModel",
    "kcde_fit",
    "lm_fit",
    "probit_fit",
    "EmpiricalDistribution",
    "ValidationBundle",
    "empirical_ccdf",
    "fragility_rel_mse",
    "normalized_ws_error",
    "wasserstein2_sq",
]

__version__ = "0.1.0"
