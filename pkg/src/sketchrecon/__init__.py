"""Coil-sketched iterative MR image reconstruction at desk scale.

The package provides a SENSE-style forward model built from composable
linear operators, a structured coil-dimension sketching scheme embedded in
an iterative-Hessian-sketch outer loop, the baseline reconstructions it is
benchmarked against, synthetic data generation, image-quality metrics, and
a batch CLI for the evaluation protocol.
"""

from .linops import (
    GridShape,
    Image,
    Trajectory,
    LinOp,
    CostCounter,
    IdentityOp,
    DiagonalOp,
    ComposeOp,
    CenteredFFTOp,
    CartesianMaskOp,
    NonuniformFTOp,
    WaveletOp,
    FiniteDiffOp,
    fft_centered,
    dft_nonuniform,
    wavelet_forward,
    wavelet_adjoint,
    finite_diff_forward,
    finite_diff_adjoint,
    max_eig_power,
    dot_test,
)
from .rng import seed_stream

__all__ = [
    "GridShape",
    "Image",
    "Trajectory",
    "LinOp",
    "CostCounter",
    "IdentityOp",
    "DiagonalOp",
    "ComposeOp",
    "CenteredFFTOp",
    "CartesianMaskOp",
    "NonuniformFTOp",
    "WaveletOp",
    "FiniteDiffOp",
    "fft_centered",
    "dft_nonuniform",
    "wavelet_forward",
    "wavelet_adjoint",
    "finite_diff_forward",
    "finite_diff_adjoint",
    "max_eig_power",
    "dot_test",
    "seed_stream",
]
