"""Synthetic data generation: phantoms, coil maps, trajectories, k-space.

Stands in for scanner data at desk scale.  Everything is deterministic
under a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward_model import KSpaceData, SenseOperator, SensitivityMaps
from .linops import GridShape, Image, Trajectory
from .rng import seed_stream

__all__ = [
    "PhantomSpec",
    "AcquisitionSpec",
    "make_phantom",
    "make_coil_maps",
    "cartesian_mask",
    "radial_traj",
    "radial_stack_traj",
    "acquire",
    "rasterize_ellipses",
    "support_mask",
    "noise_sigma_for_snr",
    "GOLDEN_RATIO_CONJUGATE",
]

GOLDEN_RATIO_CONJUGATE = 0.6180339887498949

# Modified Shepp-Logan ellipse table: (intensity, x0, y0, a, b, theta_deg).
# x points right (second image axis), y up (negated first image axis).
SHEPP_LOGAN_2D = (
    (1.00, 0.00, 0.0000, 0.6900, 0.9200, 0.0),
    (-0.80, 0.00, -0.0184, 0.6624, 0.8740, 0.0),
    (-0.20, 0.22, 0.0000, 0.1100, 0.3100, -18.0),
    (-0.20, -0.22, 0.0000, 0.1600, 0.4100, 18.0),
    (0.10, 0.00, 0.3500, 0.2100, 0.2500, 0.0),
    (0.10, 0.00, 0.1000, 0.0460, 0.0460, 0.0),
    (0.10, 0.00, -0.1000, 0.0460, 0.0460, 0.0),
    (0.10, -0.08, -0.6050, 0.0460, 0.0230, 0.0),
    (0.10, 0.00, -0.6060, 0.0230, 0.0230, 0.0),
    (0.10, 0.06, -0.6050, 0.0230, 0.0460, 0.0),
)

# Stacked-ellipsoid variant of the same layout: each row adds (z0, c).
ELLIPSOIDS_3D = (
    (1.00, 0.00, 0.0000, 0.6900, 0.9200, 0.0, 0.00, 0.90),
    (-0.80, 0.00, -0.0184, 0.6624, 0.8740, 0.0, 0.00, 0.88),
    (-0.20, 0.22, 0.0000, 0.1100, 0.3100, -18.0, 0.00, 0.50),
    (-0.20, -0.22, 0.0000, 0.1600, 0.4100, 18.0, 0.00, 0.50),
    (0.10, 0.00, 0.3500, 0.2100, 0.2500, 0.0, 0.25, 0.40),
    (0.10, 0.00, 0.1000, 0.0460, 0.0460, 0.0, -0.25, 0.25),
    (0.10, 0.00, -0.1000, 0.0460, 0.0460, 0.0, 0.25, 0.25),
    (0.10, -0.08, -0.6050, 0.0460, 0.0230, 0.0, -0.25, 0.25),
    (0.10, 0.00, -0.6060, 0.0230, 0.0230, 0.0, 0.00, 0.25),
    (0.10, 0.06, -0.6050, 0.0230, 0.0460, 0.0, 0.25, 0.25),
)


@dataclass(frozen=True)
class PhantomSpec:
    """What phantom to rasterize on which grid."""

    kind: str  # 'shepp-logan-2d' or 'ellipsoids-3d'
    shape: GridShape
    contrast: float = 1.0

    def __post_init__(self):
        if self.kind not in ("shepp-logan-2d", "ellipsoids-3d"):
            raise ValueError(f"unsupported phantom kind {self.kind!r}")
        if self.kind == "shepp-logan-2d" and self.shape.ndim != 2:
            raise ValueError("shepp-logan-2d needs a 2-D grid")
        if self.kind == "ellipsoids-3d" and self.shape.ndim != 3:
            raise ValueError("ellipsoids-3d needs a 3-D grid")
        if self.contrast <= 0:
            raise ValueError("contrast scaling must be positive")


@dataclass(frozen=True)
class AcquisitionSpec:
    """Noise level, seed, and nominal acceleration of an acquisition."""

    traj: Trajectory
    noise_sigma: float = 0.0
    seed: int = 0
    R: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise ValueError("noise_sigma must be finite and nonnegative")
        if self.R < 1.0:
            raise ValueError("undersampling factor R must be >= 1")


def _normalized_axes(shape: GridShape, oversample: int = 1) -> list[np.ndarray]:
    """Per-axis pixel-center coordinates in [-1, 1), optionally supersampled."""
    axes = []
    for n in shape.dims:
        m = n * oversample
        axes.append((np.arange(m) - (m - 1) / 2.0) * (2.0 / m))
    return axes


def rasterize_ellipses(
    shape: GridShape, table, oversample: int = 1
) -> np.ndarray:
    """Sum of constant-intensity ellipses/ellipsoids sampled at pixel centers.

    2-D rows are (intensity, x0, y0, a, b, theta_deg); 3-D rows append
    (z0, c).  `oversample` rasterizes on a finer grid (used by tests as an
    independent energy oracle); the result keeps the fine grid.
    """
    axes = _normalized_axes(shape, oversample)
    if shape.ndim == 2:
        yy, xx = np.meshgrid(-axes[0], axes[1], indexing="ij")
        out = np.zeros(yy.shape)
        for inten, x0, y0, a, b, theta in table:
            th = np.deg2rad(theta)
            xr = (xx - x0) * np.cos(th) + (yy - y0) * np.sin(th)
            yr = -(xx - x0) * np.sin(th) + (yy - y0) * np.cos(th)
            out += inten * ((xr / a) ** 2 + (yr / b) ** 2 <= 1.0)
        return out
    if shape.ndim == 3:
        zz, yy, xx = np.meshgrid(axes[0], -axes[1], axes[2], indexing="ij")
        out = np.zeros(zz.shape)
        for inten, x0, y0, a, b, theta, z0, c in table:
            th = np.deg2rad(theta)
            xr = (xx - x0) * np.cos(th) + (yy - y0) * np.sin(th)
            yr = -(xx - x0) * np.sin(th) + (yy - y0) * np.cos(th)
            zr = zz - z0
            out += inten * ((xr / a) ** 2 + (yr / b) ** 2 + (zr / c) ** 2 <= 1.0)
        return out
    raise ValueError("rasterization supports 2-D and 3-D grids")


def make_phantom(spec: PhantomSpec) -> Image:
    """Rasterize the requested phantom; values lie in [0, 1], background 0."""
    table = SHEPP_LOGAN_2D if spec.kind == "shepp-logan-2d" else ELLIPSOIDS_3D
    vals = rasterize_ellipses(spec.shape, table)
    vals = np.clip(vals * spec.contrast, 0.0, 1.0)
    return Image(spec.shape, vals.ravel().astype(np.complex128))


def support_mask(x: Image, rel_threshold: float = 1e-3) -> np.ndarray:
    """Boolean object support: voxels with magnitude above a relative floor."""
    mag = np.abs(x.values)
    return mag > rel_threshold * mag.max()


def make_coil_maps(
    n_coils: int,
    shape: GridShape,
    seed: int,
    support: np.ndarray | None = None,
    lobe_width: float = 0.55,
    ring_radius: float = 1.05,
) -> SensitivityMaps:
    """Synthetic receive maps: Gaussian lobes on a ring with smooth phase.

    Lobe magnitudes are sum-of-squares normalized so the combined
    sensitivity is exactly 1 on the object support; maps vanish outside the
    support when one is given.
    """
    if n_coils < 1:
        raise ValueError("need at least one coil")
    rng = seed_stream(seed, 0)
    axes = _normalized_axes(shape)
    if shape.ndim == 2:
        yy, xx = np.meshgrid(-axes[0], axes[1], indexing="ij")
        zz = None
    elif shape.ndim == 3:
        zz, yy, xx = np.meshgrid(axes[0], -axes[1], axes[2], indexing="ij")
    else:
        raise ValueError("coil maps support 2-D and 3-D grids")

    coils = np.empty((n_coils, shape.size), dtype=np.complex128)
    for c in range(n_coils):
        ang = 2 * np.pi * c / n_coils + rng.uniform(-0.15, 0.15)
        xc, yc = ring_radius * np.cos(ang), ring_radius * np.sin(ang)
        r2 = (xx - xc) ** 2 + (yy - yc) ** 2
        if zz is not None:
            zc = -0.5 + (c % 3) * 0.5 + rng.uniform(-0.1, 0.1)
            r2 = r2 + (zz - zc) ** 2
        mag = np.exp(-r2 / (2 * lobe_width**2))
        kx, ky = rng.uniform(-2.0, 2.0, size=2)
        quad = rng.uniform(-1.0, 1.0)
        phase = kx * xx + ky * yy + quad * (xx**2 + yy**2) + rng.uniform(0, 2 * np.pi)
        coils[c] = (mag * np.exp(1j * phase)).ravel()

    sos = np.sqrt(np.sum(np.abs(coils) ** 2, axis=0))
    coils /= sos[None, :]
    if support is not None:
        coils[:, ~np.asarray(support, dtype=bool).ravel()] = 0.0
    return SensitivityMaps(shape, coils)


def _full_line_points(shape: GridShape, kept_lines: np.ndarray) -> np.ndarray:
    """Integer trajectory covering whole readout lines for kept phase encodes."""
    centered = [np.arange(n) - n // 2 for n in shape.dims]
    centered[0] = kept_lines - shape.dims[0] // 2
    mesh = np.meshgrid(*centered, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1).astype(np.float64)


def cartesian_mask(
    shape: GridShape, R: float, kind: str = "regular", acs: int = 0, seed: int = 0
) -> Trajectory:
    """Undersampled Cartesian mask along the first (phase-encode) axis.

    'regular' keeps every R-th line plus `acs` center lines; 'random' draws
    a variable-density Bernoulli pattern with a fully kept center block,
    then trims/pads so the realized acceleration lands within 10% of R.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if kind not in ("regular", "random"):
        raise ValueError(f"unknown mask kind {kind!r}")
    n_pe = shape.dims[0]
    if acs < 0 or acs > n_pe:
        raise ValueError(f"acs block of {acs} lines does not fit in {n_pe}")
    acs_lines = (
        np.arange(n_pe // 2 - acs // 2, n_pe // 2 - acs // 2 + acs)
        if acs > 0
        else np.empty(0, dtype=int)
    )
    if kind == "regular":
        stride = max(1, int(round(R)))
        kept = np.union1d(np.arange(0, n_pe, stride), acs_lines)
    else:
        rng = seed_stream(seed, 0)
        target = int(round(n_pe / R))
        target = max(target, acs)
        u = (np.arange(n_pe) - n_pe // 2) / (n_pe / 2)
        density = np.exp(-(u**2) / (2 * 0.35**2))
        density[acs_lines] = 0.0  # acs handled separately
        want = target - acs_lines.size
        scale = want / max(density.sum(), 1e-12)
        keep = rng.random(n_pe) < np.minimum(1.0, scale * density)
        keep[acs_lines] = True
        # trim or pad to the exact target so realized R stays within band
        excess = int(keep.sum()) - target
        changeable = np.setdiff1d(np.nonzero(keep)[0], acs_lines)
        if excess > 0:
            drop = rng.choice(changeable, size=excess, replace=False)
            keep[drop] = False
        elif excess < 0:
            candidates = np.nonzero(~keep)[0]
            probs = density[candidates]
            probs = probs / probs.sum() if probs.sum() > 0 else None
            add = rng.choice(candidates, size=-excess, replace=False, p=probs)
            keep[add] = True
        kept = np.nonzero(keep)[0]
    if kept.size == 0:
        raise ValueError("mask kept no lines")
    return Trajectory(_full_line_points(shape, kept), "cartesian-mask")


def realized_acceleration(shape: GridShape, traj: Trajectory) -> float:
    """Grid size divided by the number of acquired samples."""
    return shape.size / traj.n_points


def radial_traj(
    spokes: int, readout: int, golden: bool = True, kmax: float | None = None
) -> Trajectory:
    """2-D radial trajectory; spokes pass through the k-space origin.

    Golden spacing uses the conjugate golden-ratio angle increment
    (mod pi); otherwise spokes are uniformly spread over [0, pi).  Readout
    samples span [-kmax, kmax) including the exact center.
    """
    if spokes < 1 or readout < 1:
        raise ValueError("spokes and readout must be >= 1")
    if kmax is None:
        kmax = readout / 2
    radii = (np.arange(readout) - readout // 2) * (2 * kmax / readout)
    if golden:
        angles = np.mod(np.arange(spokes) * np.pi * GOLDEN_RATIO_CONJUGATE, np.pi)
    else:
        angles = np.arange(spokes) * np.pi / spokes
    pts = np.empty((spokes * readout, 2))
    for s, ang in enumerate(angles):
        pts[s * readout:(s + 1) * readout, 0] = radii * np.cos(ang)
        pts[s * readout:(s + 1) * readout, 1] = radii * np.sin(ang)
    return Trajectory(pts, "non-cartesian")


def radial_stack_traj(
    spokes: int,
    readout: int,
    slices: int,
    golden: bool = True,
    kmax: float | None = None,
    kz_max: float | None = None,
) -> Trajectory:
    """Small 3-D stack-of-radial trajectory: one rotated radial set per kz."""
    if slices < 1:
        raise ValueError("slices must be >= 1")
    if kz_max is None:
        kz_max = slices / 2
    base = radial_traj(spokes, readout, golden=golden, kmax=kmax)
    n_plane = base.n_points
    pts = np.empty((slices * n_plane, 3))
    for s in range(slices):
        kz = (s - slices // 2) * (2 * kz_max / slices)
        if golden:
            rot = s * np.pi * GOLDEN_RATIO_CONJUGATE
        else:
            rot = s * np.pi / max(1, slices)
        ca, sa = np.cos(rot), np.sin(rot)
        plane = base.points @ np.array([[ca, sa], [-sa, ca]])
        pts[s * n_plane:(s + 1) * n_plane, 0] = kz
        pts[s * n_plane:(s + 1) * n_plane, 1:] = plane
    return Trajectory(pts, "non-cartesian")


def noise_sigma_for_snr(x: Image, snr_db: float = 30.0) -> float:
    """Per-sample complex noise std giving roughly `snr_db` in the SOS image.

    With unitary transforms and SOS-normalized maps, image-domain noise has
    about the same std as k-space noise, so sigma = rms(signal) * 10^(-SNR/20)
    over the object support.
    """
    mag = np.abs(x.values)
    sup = mag > 1e-3 * mag.max()
    rms = float(np.sqrt(np.mean(mag[sup] ** 2))) if np.any(sup) else 0.0
    return rms * 10.0 ** (-snr_db / 20.0)


def acquire(x: Image, op: SenseOperator, spec: AcquisitionSpec) -> KSpaceData:
    """Simulate k = F C x + n with i.i.d. complex Gaussian noise.

    Density weights are NOT applied here; `weights_applied` is False so the
    reconstruction side forms y = W^(1/2) k itself.
    """
    if x.shape.dims != op.maps.shape.dims:
        raise ValueError("image grid does not match operator grid")
    if spec.traj.points.shape != op.traj.points.shape or not np.array_equal(
        spec.traj.points, op.traj.points
    ):
        raise ValueError("acquisition trajectory does not match operator trajectory")
    clean = op.forward_unweighted(x.values).reshape(op.n_coils, op.n_points)
    if spec.noise_sigma > 0:
        rng = seed_stream(spec.seed, 0)
        scale = spec.noise_sigma / np.sqrt(2.0)
        noise = scale * (
            rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape)
        )
        clean = clean + noise
    return KSpaceData(op.traj, clean, weights_applied=False)
