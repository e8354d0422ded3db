"""Image-quality metrics, convergence distance, and the Monte-Carlo
inverse g-factor protocol.

NRMSE/SSIM/HFEN operate on magnitude images.  SSIM uses the standard
11x11 Gaussian window (sigma 1.5, K1=0.01, K2=0.03); HFEN uses a 15x15
Laplacian-of-Gaussian kernel (sigma 1.5) made exactly zero-mean so DC
offsets drop out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve as _convolve
from scipy.ndimage import gaussian_filter as _gaussian_filter

from .forward_model import SenseOperator
from .linops import Image
from .rng import seed_stream

__all__ = [
    "MetricReport",
    "GFactorMap",
    "nrmse",
    "ssim",
    "hfen",
    "convergence_distance",
    "metric_report",
    "gfactor_montecarlo",
]

CONVERGENCE_THRESHOLD = 0.05  # declared converged below 5% distance


@dataclass(frozen=True)
class MetricReport:
    nrmse: float
    ssim: float
    hfen: float
    reference: str = "reference"


@dataclass(frozen=True)
class GFactorMap:
    inverse_g: np.ndarray  # (D,) nonnegative, zero outside the mask
    mask: np.ndarray  # (D,) bool: support with nondegenerate variance
    trials: int
    R: float


def _magnitude_grid(x: Image) -> np.ndarray:
    return np.abs(x.grid)


def nrmse(x: Image, ref: Image) -> float:
    """|| |x| - |ref| ||_2 / ||ref||_2 on magnitude images."""
    if x.shape.dims != ref.shape.dims:
        raise ValueError("images must share a grid")
    ref_norm = float(np.linalg.norm(ref.values))
    if ref_norm == 0:
        raise ValueError("reference image is zero")
    return float(np.linalg.norm(np.abs(x.values) - np.abs(ref.values)) / ref_norm)


def _ssim_2d(im: np.ndarray, ref: np.ndarray, data_range: float) -> float:
    sigma = 1.5
    truncate = 3.5
    win = 2 * int(truncate * sigma + 0.5) + 1  # 11
    if min(im.shape) < win:
        raise ValueError(f"images smaller than the {win}x{win} SSIM window")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    def filt(a):
        return _gaussian_filter(a, sigma=sigma, truncate=truncate)

    ux, uy = filt(im), filt(ref)
    uxx, uyy, uxy = filt(im * im), filt(ref * ref), filt(im * ref)
    vx = uxx - ux * ux
    vy = uyy - uy * uy
    vxy = uxy - ux * uy
    s = ((2 * ux * uy + c1) * (2 * vxy + c2)) / (
        (ux * ux + uy * uy + c1) * (vx + vy + c2)
    )
    pad = (win - 1) // 2
    core = s[tuple(slice(pad, n - pad) for n in s.shape)]
    return float(core.mean())


def ssim(x: Image, ref: Image) -> float:
    """Mean local structural similarity of magnitude images.

    The dynamic range is max(|ref|); 3-D volumes are scored slice by slice
    along the first axis and averaged.
    """
    if x.shape.dims != ref.shape.dims:
        raise ValueError("images must share a grid")
    a, b = _magnitude_grid(x), _magnitude_grid(ref)
    data_range = float(b.max())
    if data_range == 0:
        raise ValueError("reference image is zero")
    if a.ndim == 2:
        return _ssim_2d(a, b, data_range)
    if a.ndim == 3:
        return float(np.mean([_ssim_2d(a[i], b[i], data_range) for i in range(a.shape[0])]))
    raise ValueError("ssim supports 2-D and 3-D images")


def _log_kernel(size: int = 15, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - size // 2
    xx, yy = np.meshgrid(r, r, indexing="ij")
    r2 = xx**2 + yy**2
    k = (r2 - 2 * sigma**2) / sigma**4 * np.exp(-r2 / (2 * sigma**2))
    return k - k.mean()  # exactly zero-sum: DC never leaks through


def _hfen_2d(im: np.ndarray, ref: np.ndarray, kernel: np.ndarray) -> tuple[float, float]:
    fi = _convolve(im, kernel, mode="nearest")
    fr = _convolve(ref, kernel, mode="nearest")
    return float(np.linalg.norm(fi - fr)), float(np.linalg.norm(fr))


def hfen(x: Image, ref: Image) -> float:
    """High-frequency error norm: relative L2 error after LoG filtering."""
    if x.shape.dims != ref.shape.dims:
        raise ValueError("images must share a grid")
    a, b = _magnitude_grid(x), _magnitude_grid(ref)
    kernel = _log_kernel()
    if a.ndim == 2:
        num, den = _hfen_2d(a, b, kernel)
    elif a.ndim == 3:
        nums, dens = zip(*(_hfen_2d(a[i], b[i], kernel) for i in range(a.shape[0])))
        num = float(np.sqrt(np.sum(np.square(nums))))
        den = float(np.sqrt(np.sum(np.square(dens))))
    else:
        raise ValueError("hfen supports 2-D and 3-D images")
    if den == 0:
        raise ValueError("LoG of the reference is zero")
    return num / den


def convergence_distance(x_t: Image | np.ndarray, x_inf: Image | np.ndarray) -> float:
    """Normalized distance ||x_t - x_inf|| / ||x_inf||."""
    a = x_t.values if isinstance(x_t, Image) else np.asarray(x_t)
    b = x_inf.values if isinstance(x_inf, Image) else np.asarray(x_inf)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0:
        raise ValueError("reference iterate is zero")
    return float(np.linalg.norm(a - b) / b_norm)


def metric_report(x: Image, ref: Image, reference: str = "reference") -> MetricReport:
    return MetricReport(nrmse(x, ref), ssim(x, ref), hfen(x, ref), reference)


def gfactor_montecarlo(
    recon,
    a_full: SenseOperator,
    a_under: SenseOperator,
    x_true: Image,
    noise_sigma: float,
    trials: int,
    R: float,
    seed: int,
    support_rel_threshold: float = 1e-3,
) -> GFactorMap:
    """Pseudo-replica inverse g-factor: std ratio over noise realizations.

    Per trial, fresh complex Gaussian noise is added to the fully-sampled
    and undersampled raw k-space, both are reconstructed with the supplied
    deterministic `recon(op, y) -> Image`, and the pixelwise complex stds
    sigma_full / sigma_under are accumulated.  The map is
    sigma_full * sqrt(R) / sigma_under on the object support; pixels with
    degenerate (zero) variance are masked out.  The trial -> noise-seed
    mapping is fixed so any execution order gives identical maps.
    """
    if trials < 2:
        raise ValueError("need at least 2 trials")
    if noise_sigma <= 0:
        raise ValueError("noise_sigma must be positive")
    clean_full = a_full.forward_unweighted(x_true.values)
    clean_under = a_under.forward_unweighted(x_true.values)
    scale = noise_sigma / np.sqrt(2.0)

    recs_full = np.empty((trials, x_true.shape.size), dtype=np.complex128)
    recs_under = np.empty((trials, x_true.shape.size), dtype=np.complex128)
    for i in range(trials):
        rng = seed_stream(seed, i)
        n_full = scale * (
            rng.standard_normal(clean_full.shape)
            + 1j * rng.standard_normal(clean_full.shape)
        )
        n_under = scale * (
            rng.standard_normal(clean_under.shape)
            + 1j * rng.standard_normal(clean_under.shape)
        )
        y_full = a_full.weight_data(clean_full + n_full)
        y_under = a_under.weight_data(clean_under + n_under)
        recs_full[i] = recon(a_full, y_full).values
        recs_under[i] = recon(a_under, y_under).values

    std_full = np.std(recs_full, axis=0)
    std_under = np.std(recs_under, axis=0)
    mag = np.abs(x_true.values)
    support = mag > support_rel_threshold * mag.max()
    degenerate = std_under <= np.finfo(float).tiny
    mask = support & ~degenerate
    inverse_g = np.zeros(x_true.shape.size)
    inverse_g[mask] = std_full[mask] * np.sqrt(R) / std_under[mask]
    return GFactorMap(inverse_g=inverse_g, mask=mask, trials=trials, R=R)
