"""Deep networks on multi-channel SPD matrices.

SPD-preserving convolution, element-wise activation, recursion and
diagonalization layers with reverse-mode gradients, a skeleton
descriptor pipeline, and randomized certification suites.
"""

from .layers import (
    SpdKernelBank,
    diag_log_euclidean_distance,
    diagonalize_forward,
    spd_activate,
    spd_conv_forward,
    spd_gru_rollout,
)
from .model import ModelConfig, forward, init_params
from .oracles import certify_spd, general_log_euclidean, toeplitz_conv_oracle
from .skeleton import SkeletonSequence, extract_spd_features, generate_synthetic

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "SkeletonSequence",
    "SpdKernelBank",
    "certify_spd",
    "diag_log_euclidean_distance",
    "diagonalize_forward",
    "extract_spd_features",
    "forward",
    "general_log_euclidean",
    "generate_synthetic",
    "init_params",
    "spd_activate",
    "spd_conv_forward",
    "spd_gru_rollout",
    "toeplitz_conv_oracle",
]
