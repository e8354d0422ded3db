"""Structured sketching of the coil dimension.

The sketching matrix keeps the top `v` energy-ordered virtual coils
verbatim and mixes the remaining low-energy coils into `s` random
combinations, so the sketched operator sees `c_hat = v + s` coils.  Because
density weighting and the Fourier transform act coil-wise, sketching
commutes with them and reduces to sketching the sensitivity maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward_model import SenseOperator, SensitivityMaps
from .rng import seed_stream

__all__ = [
    "SketchConfig",
    "SketchMatrix",
    "gen_sketch_matrix",
    "sketch_maps",
    "apply_sketch_to_data",
    "build_sketched_operator",
]


@dataclass(frozen=True)
class SketchConfig:
    """Block design of the sketching matrix: c_hat = v + s."""

    c_hat: int
    v: int
    s: int
    distribution: str = "rademacher"
    seed: int = 0

    def __post_init__(self):
        if self.v < 0 or self.s < 0:
            raise ValueError("v and s must be nonnegative")
        if self.c_hat != self.v + self.s:
            raise ValueError(f"c_hat must equal v + s, got {self.c_hat} != {self.v}+{self.s}")
        if self.distribution not in ("gaussian", "rademacher"):
            raise ValueError(f"unknown distribution {self.distribution!r}")

    def with_seed(self, seed: int) -> "SketchConfig":
        return SketchConfig(self.c_hat, self.v, self.s, self.distribution, seed)


@dataclass(frozen=True)
class SketchMatrix:
    """Realized c_hat x C sketching matrix with its generating config."""

    mat: np.ndarray
    config: SketchConfig

    def __post_init__(self):
        m = np.ascontiguousarray(self.mat, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != self.config.c_hat:
            raise ValueError(f"matrix must have {self.config.c_hat} rows")
        object.__setattr__(self, "mat", m)

    @property
    def n_coils_in(self) -> int:
        return self.mat.shape[1]


def gen_sketch_matrix(cfg: SketchConfig, n_coils: int) -> SketchMatrix:
    """Draw the block-structured sketching matrix for `n_coils` input coils.

    Layout: identity on the first `v` coils, zeros off the blocks, and an
    i.i.d. random s x (C - v) block on the low-energy coils.  Gaussian
    entries have standard deviation 1/s; Rademacher entries are +/-1.  The
    draw is a pure function of (cfg, n_coils).  `c_hat == n_coils` with
    s == 0 yields the identity (sketching disabled).
    """
    if cfg.v > n_coils:
        raise ValueError(f"v = {cfg.v} exceeds the number of coils {n_coils}")
    if cfg.s > n_coils - cfg.v:
        raise ValueError(f"s = {cfg.s} exceeds the {n_coils - cfg.v} unsketched coils")
    if cfg.c_hat > n_coils:
        raise ValueError(f"c_hat = {cfg.c_hat} exceeds the number of coils {n_coils}")
    mat = np.zeros((cfg.c_hat, n_coils))
    mat[: cfg.v, : cfg.v] = np.eye(cfg.v)
    if cfg.s > 0:
        rng = seed_stream(cfg.seed, 0)
        cols = n_coils - cfg.v
        if cfg.distribution == "gaussian":
            block = rng.standard_normal((cfg.s, cols)) / cfg.s
        else:
            block = rng.integers(0, 2, size=(cfg.s, cols)) * 2.0 - 1.0
        mat[cfg.v :, cfg.v :] = block
    return SketchMatrix(mat, cfg)


def sketch_maps(maps: SensitivityMaps, sk: SketchMatrix) -> SensitivityMaps:
    """Reduced sensitivity set: per voxel, coil vectors multiplied by the sketch."""
    if sk.n_coils_in != maps.n_coils:
        raise ValueError(
            f"sketch expects {sk.n_coils_in} coils, maps have {maps.n_coils}"
        )
    return SensitivityMaps(maps.shape, sk.mat @ maps.coils)


def apply_sketch_to_data(stacked: np.ndarray, sk: SketchMatrix, n_points: int) -> np.ndarray:
    """Apply (S ox I_N) to a coil-stacked k-space vector."""
    k = stacked.reshape(sk.n_coils_in, n_points)
    return (sk.mat @ k).ravel()


def build_sketched_operator(op: SenseOperator, sk: SketchMatrix) -> SenseOperator:
    """Reduced-coil operator W^(1/2) F (S maps); shares kernel and counters.

    Valid because the density weights are identical across coils, so the
    sketch commutes with W^(1/2) F.  One application costs c_hat coil
    transforms, tallied on the parent operator's counter.
    """
    if sk.n_coils_in != op.n_coils:
        raise ValueError(
            f"sketch expects {sk.n_coils_in} coils, operator has {op.n_coils}"
        )
    return SenseOperator(
        sketch_maps(op.maps, sk),
        op.traj,
        op.weights,
        counter=op.counter,
        kernel=op.kernel,
    )
