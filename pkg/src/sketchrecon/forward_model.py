"""SENSE encoding operator and coil-basis utilities.

Builds A = W^(1/2) F C from sensitivity maps, a trajectory, and optional
density-compensation weights, and provides SVD coil compression plus ramp
density weights for radial-type trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linops import (
    CostCounter,
    GridShape,
    LinOp,
    Trajectory,
    make_fourier_kernel,
)

__all__ = [
    "SensitivityMaps",
    "DensityWeights",
    "KSpaceData",
    "SenseOperator",
    "build_sense",
    "radial_density_weights",
    "coil_compress_svd",
    "validate_sos_normalized",
]


@dataclass(frozen=True)
class SensitivityMaps:
    """Per-coil complex sensitivity profiles, one row per coil."""

    shape: GridShape
    coils: np.ndarray  # (C, D) complex

    def __post_init__(self):
        c = np.ascontiguousarray(self.coils, dtype=np.complex128)
        if c.ndim == 1:
            c = c[None, :]
        if c.ndim != 2 or c.shape[1] != self.shape.size:
            raise ValueError(
                f"coils must be (C, {self.shape.size}), got {np.shape(self.coils)}"
            )
        if c.shape[0] < 1:
            raise ValueError("need at least one coil")
        if not np.all(np.isfinite(c)):
            raise ValueError("sensitivity maps contain non-finite entries")
        object.__setattr__(self, "coils", c)

    @property
    def n_coils(self) -> int:
        return self.coils.shape[0]

    def sos(self) -> np.ndarray:
        """Per-voxel sum-of-squares magnitude."""
        return np.sqrt(np.sum(np.abs(self.coils) ** 2, axis=0))


def validate_sos_normalized(
    maps: SensitivityMaps, support: np.ndarray | None = None, tol: float = 1e-6
) -> None:
    """Check the per-voxel sum-of-squares bound <= 1 + tol on the support."""
    sos2 = np.sum(np.abs(maps.coils) ** 2, axis=0)
    if support is not None:
        sos2 = sos2[np.asarray(support, dtype=bool).ravel()]
    if sos2.size and sos2.max() > 1.0 + tol:
        raise ValueError(f"sum-of-squares exceeds 1 + {tol}: max {sos2.max()}")


@dataclass(frozen=True)
class DensityWeights:
    """Nonnegative density-compensation weights, shared by every coil."""

    w: np.ndarray  # (N,) float

    def __post_init__(self):
        w = np.ascontiguousarray(self.w, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError("weights must be a flat vector (identical across coils)")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights contain non-finite entries")
        if w.size and w.min() < 0:
            raise ValueError("weights must be nonnegative")
        object.__setattr__(self, "w", w)


@dataclass(frozen=True)
class KSpaceData:
    """Per-coil k-space measurements plus the trajectory that produced them."""

    traj: Trajectory
    coils: np.ndarray  # (C, N) complex
    weights_applied: bool = False

    def __post_init__(self):
        c = np.ascontiguousarray(self.coils, dtype=np.complex128)
        if c.ndim == 1:
            c = c[None, :]
        if c.ndim != 2 or c.shape[1] != self.traj.n_points:
            raise ValueError(
                f"coil data must be (C, {self.traj.n_points}), got {np.shape(self.coils)}"
            )
        object.__setattr__(self, "coils", c)

    @property
    def n_coils(self) -> int:
        return self.coils.shape[0]

    def stacked(self) -> np.ndarray:
        """Coil-stacked measurement vector of length C*N."""
        return self.coils.ravel()


class SenseOperator(LinOp):
    """Multi-coil encoding operator A = W^(1/2) F C (D -> C*N).

    Forward computes per coil  w^(1/2) . F(c_c . x); the adjoint is the
    conjugate sum over coils.  Each application transforms every coil once,
    so the 'coil_transform' counter advances by C per forward or adjoint.
    """

    def __init__(
        self,
        maps: SensitivityMaps,
        traj: Trajectory,
        weights: DensityWeights | None = None,
        method: str = "auto",
        counter: CostCounter | None = None,
        kernel=None,
    ):
        if maps.shape.ndim != traj.ndim:
            raise ValueError(
                f"maps are {maps.shape.ndim}-D but trajectory is {traj.ndim}-D"
            )
        if weights is not None:
            if traj.kind == "cartesian-mask":
                raise ValueError("density weights are not used with Cartesian masks")
            if weights.w.shape != (traj.n_points,):
                raise ValueError(
                    f"weights must have length {traj.n_points}, got {weights.w.shape}"
                )
        if kernel is None:
            kernel = make_fourier_kernel(maps.shape, traj, method)
        super().__init__(maps.shape.size, maps.n_coils * traj.n_points, counter)
        self.maps = maps
        self.traj = traj
        self.weights = weights
        self.kernel = kernel
        self._sqrt_w = None if weights is None else np.sqrt(weights.w)

    @property
    def n_coils(self) -> int:
        return self.maps.n_coils

    @property
    def n_points(self) -> int:
        return self.traj.n_points

    def _apply_fourier(self, coil_images: np.ndarray) -> np.ndarray:
        self.counter.add("coil_transform", coil_images.shape[0])
        return self.kernel.apply(coil_images)

    def _forward(self, x):
        k = self._apply_fourier(self.maps.coils * x[None, :])
        if self._sqrt_w is not None:
            k = k * self._sqrt_w[None, :]
        return k.ravel()

    def _adjoint(self, y):
        k = y.reshape(self.n_coils, self.n_points)
        if self._sqrt_w is not None:
            k = k * self._sqrt_w[None, :]
        self.counter.add("coil_transform", self.n_coils)
        imgs = self.kernel.apply_adjoint(k)
        return np.sum(np.conj(self.maps.coils) * imgs, axis=0)

    def forward_unweighted(self, x: np.ndarray) -> np.ndarray:
        """Apply F C without the density weighting (the acquisition model)."""
        x = np.ascontiguousarray(x, dtype=np.complex128)
        if x.shape != (self.in_dim,):
            raise ValueError(f"expected input of shape ({self.in_dim},), got {x.shape}")
        return self._apply_fourier(self.maps.coils * x[None, :]).ravel()

    def weight_data(self, coils: np.ndarray) -> np.ndarray:
        """Apply W^(1/2) to per-coil k-space data ((C, N) or stacked)."""
        if self._sqrt_w is None:
            return np.array(coils, dtype=np.complex128, copy=True)
        k = np.asarray(coils, dtype=np.complex128)
        if k.ndim == 1:
            return (k.reshape(self.n_coils, self.n_points) * self._sqrt_w[None, :]).ravel()
        return k * self._sqrt_w[None, :]

    def coil_subset(self, idx: np.ndarray) -> "SenseOperator":
        """Operator restricted to the given coils; shares kernel and counter."""
        sub = SensitivityMaps(self.maps.shape, self.maps.coils[np.asarray(idx)])
        return SenseOperator(
            sub, self.traj, self.weights, counter=self.counter, kernel=self.kernel
        )

    def measurement_vector(self, data: KSpaceData) -> np.ndarray:
        """Stacked y = W^(1/2) k for reconstruction, honoring weights_applied."""
        if data.n_coils != self.n_coils:
            raise ValueError(
                f"data has {data.n_coils} coils but operator has {self.n_coils}"
            )
        if data.weights_applied:
            return data.stacked()
        return self.weight_data(data.coils).ravel()


def build_sense(
    maps: SensitivityMaps,
    traj: Trajectory,
    weights: DensityWeights | None = None,
    method: str = "auto",
    counter: CostCounter | None = None,
) -> SenseOperator:
    """Construct the SENSE encoding operator for a trajectory."""
    return SenseOperator(maps, traj, weights, method=method, counter=counter)


def radial_density_weights(traj: Trajectory) -> DensityWeights:
    """Ramp density compensation w ~ |f| for radial/cones-like trajectories.

    Samples at the origin get half the smallest nonzero radius so the DC
    sample is not discarded; the result is scaled to max(w) = 1.
    """
    if traj.kind != "non-cartesian":
        raise ValueError("radial density weights need a non-cartesian trajectory")
    radii = np.linalg.norm(traj.points, axis=1)
    w = radii.copy()
    tol = 1e-12 * max(radii.max(), 1.0)
    nonzero = radii > tol
    if not np.any(nonzero):
        return DensityWeights(np.ones_like(w))
    w[~nonzero] = 0.5 * radii[nonzero].min()
    return DensityWeights(w / w.max())


def coil_compress_svd(
    data: KSpaceData, maps: SensitivityMaps, keep: int
) -> tuple[KSpaceData, SensitivityMaps, np.ndarray, float]:
    """SVD coil compression of k-space data with the maps rotated to match.

    The compression matrix comes from the SVD of the stacked C x N coil-data
    matrix; virtual coils are ordered by descending singular value.  Returns
    (compressed data, compressed maps, keep x C compression matrix, kept
    energy fraction).
    """
    c_full = data.n_coils
    if not 1 <= keep <= c_full:
        raise ValueError(f"keep must be in [1, {c_full}], got {keep}")
    if maps.n_coils != c_full:
        raise ValueError(
            f"maps have {maps.n_coils} coils but data has {c_full}"
        )
    u, s, _ = np.linalg.svd(data.coils, full_matrices=False)
    if keep > u.shape[1]:
        raise ValueError(
            f"cannot keep {keep} virtual coils from a rank-{u.shape[1]} stack"
        )
    comp = u[:, :keep].conj().T  # (keep, C)
    new_data = KSpaceData(data.traj, comp @ data.coils, data.weights_applied)
    new_maps = SensitivityMaps(maps.shape, comp @ maps.coils)
    total = float(np.sum(s**2))
    energy = float(np.sum(s[:keep] ** 2) / total) if total > 0 else 1.0
    return new_data, new_maps, comp, energy
