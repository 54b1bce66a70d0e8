"""Multiway principal component analysis.

Rank-one principal components of tensor-valued observations under a spiked
covariance model: extraction by deflated alternating maximization, three
bias-correction regimes, plug-in variance estimation, and confidence
intervals / tests for linear forms of the component loadings, plus a
Monte-Carlo harness for the synthetic benchmark configurations.
"""

from .covariance import (
    CovarianceView,
    VarianceEstimates,
    bilinear,
    contracted_matrix,
    estimate_sigma0_sq,
    estimate_sigma_sq,
)
from .debias import (
    EstimateBundle,
    InferenceUnavailableError,
    build_bundle,
    cross_fit_directions,
    empirical_bias,
    explicit_bias,
    one_step_update,
    split_fit,
)
from .estimator import (
    AlsConfig,
    AlsResult,
    MatchResult,
    fit_mpca,
    fit_mpca_results,
    match_permutation,
    rank_one_als,
)
from .inference import (
    InferenceResult,
    LinearFormTarget,
    infer_linear_form,
    normal_quantile,
    resolve_regime,
    theoretical_density,
)
from .model import (
    NOISE_KINDS,
    RankOnePC,
    SampleSet,
    SpikedModel,
    make_components,
    make_model,
    sample,
)
from .simulate import PRESETS, RunConfig, preset_config, run_simulation
from .tensors import (
    frobenius_norm,
    inner,
    mode_product,
    outer_product,
    read_long_csv,
    sin_angle,
    write_long_csv,
)

__version__ = "0.1.0"
