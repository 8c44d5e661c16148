"""Conditional DPP toolkit for selecting and optimizing diverse sets of
variable-length sequences."""

__version__ = "0.1.0"

from .cdpp import (
    MarginalKernel,
    conditional_log_prob,
    dpp_log_prob,
    marginal_kernel,
    mic_gradient,
    mic_objective,
    mle_objective,
)
from .errors import (
    DegenerateCandidatesError,
    IllConditionedError,
    InputError,
    NonFiniteGradientError,
    NotPSDError,
    NumericalError,
    SeqDppError,
)
from .kernel import DppKernel, QualityVector, build_kernel, quality_score
from .metrics import diversity_determinant, sigma_p
from .sampling import SamplerConfig, conditional_sample, dpp_sample, kdpp_sample, map_single, sample_many
from .sequences import (
    FeatureSequence,
    SimilarityMatrix,
    frame_metric_l1,
    similarity_matrix,
    soft_dtw,
    soft_dtw_backward,
)

__all__ = [
    "__version__",
    "MarginalKernel",
    "conditional_log_prob",
    "dpp_log_prob",
    "marginal_kernel",
    "mic_gradient",
    "mic_objective",
    "mle_objective",
    "DegenerateCandidatesError",
    "IllConditionedError",
    "InputError",
    "NonFiniteGradientError",
    "NotPSDError",
    "NumericalError",
    "SeqDppError",
    "DppKernel",
    "QualityVector",
    "build_kernel",
    "quality_score",
    "diversity_determinant",
    "sigma_p",
    "SamplerConfig",
    "conditional_sample",
    "dpp_sample",
    "kdpp_sample",
    "map_single",
    "sample_many",
    "FeatureSequence",
    "SimilarityMatrix",
    "frame_metric_l1",
    "similarity_matrix",
    "soft_dtw",
    "soft_dtw_backward",
]
