"""Iterative solvers and proximal operators.

CG on the normal equations, FISTA, Chambolle-Pock (PDHG), and accelerated
proximal stochastic gradient descent over coil batches.  The solvers
consume operators and gradient/prox callbacks so the same code serves the
original reconstruction problem and the sketched sub-problems.

Cost convention: counters on the operators tally the work the algorithm
performs; objective recording for histories runs with counters paused.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .forward_model import SenseOperator
from .linops import (
    FiniteDiffOp,
    GridShape,
    IdentityOp,
    Image,
    LinOp,
    WaveletOp,
    max_eig_power,
)
from .rng import seed_stream

__all__ = [
    "Regularizer",
    "SolverConfig",
    "SolveResult",
    "make_regularizer",
    "prox_l1",
    "cg_normal",
    "fista",
    "pdhg",
    "accproxsgd",
    "reconstruct",
    "normal_max_eig",
    "composite_objective",
]


@dataclass(frozen=True)
class Regularizer:
    """g(x) = lam/2 ||x||^2, lam ||Psi x||_1, or lam ||T x||_1."""

    kind: str  # 'l2', 'l1-wavelet', 'l1-tv'
    lam: float
    transform: LinOp  # identity for l2, Psi for wavelet, T for tv

    def __post_init__(self):
        if self.kind not in ("l2", "l1-wavelet", "l1-tv"):
            raise ValueError(f"unknown regularizer kind {self.kind!r}")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")

    def value(self, x: np.ndarray) -> float:
        """g(x); transform applications here do not advance cost counters."""
        if self.lam == 0.0:
            return 0.0
        if self.kind == "l2":
            return 0.5 * self.lam * float(np.linalg.norm(x) ** 2)
        with self.transform.paused_counts():
            tx = self.transform.forward(x)
        return self.lam * float(np.sum(np.abs(tx)))

    def prox(self, v: np.ndarray, step: float, tv_iters: int = 10) -> np.ndarray:
        """prox_{step*g}(v).  Exact for l2 and unitary-wavelet l1; the TV
        prox is computed by a short inner PDHG loop (tv_iters iterations)."""
        if self.lam == 0.0:
            return v.copy()
        if self.kind == "l2":
            return v / (1.0 + step * self.lam)
        if self.kind == "l1-wavelet":
            c = self.transform.forward(v)
            return self.transform.adjoint(prox_l1(c, step * self.lam))
        return _tv_prox(v, step * self.lam, self.transform, tv_iters)


def make_regularizer(
    kind: str,
    lam: float,
    shape: GridShape,
    wavelet_levels: int | None = None,
) -> Regularizer:
    """Build the regularizer with its sparsifying transform for a grid."""
    if kind == "l2":
        return Regularizer(kind, lam, IdentityOp(shape.size))
    if kind == "l1-wavelet":
        return Regularizer(kind, lam, WaveletOp(shape, wavelet_levels))
    if kind == "l1-tv":
        return Regularizer(kind, lam, FiniteDiffOp(shape))
    raise ValueError(f"unknown regularizer kind {kind!r}")


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 100
    tol: float = 1e-6
    step_scale: float = 0.9
    pdhg_sigma_tau_ratio: float = 1.0
    inner_cg_iters: int = 8
    record_history: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")
        if not 0 < self.step_scale <= 1:
            raise ValueError("step_scale must be in (0, 1]")
        if self.inner_cg_iters < 1:
            raise ValueError("inner_cg_iters must be >= 1")


@dataclass
class SolveResult:
    x: Image
    iterations_run: int
    objective_history: np.ndarray
    coil_transform_count: int
    wall_time: float


def prox_l1(v: np.ndarray, thresh: float) -> np.ndarray:
    """Complex magnitude soft threshold; zeros stay zero."""
    if thresh < 0:
        raise ValueError("threshold must be nonnegative")
    mag = np.abs(v)
    scale = np.maximum(mag - thresh, 0.0) / np.where(mag > 0, mag, 1.0)
    return v * scale


def _clamp_magnitude(p: np.ndarray, radius: float) -> np.ndarray:
    """Project each complex entry onto the disc of the given radius."""
    mag = np.abs(p)
    factor = np.where(mag > radius, radius / np.where(mag > 0, mag, 1.0), 1.0)
    return p * factor


def _op_norm(T: LinOp) -> float:
    """Spectral norm; exact closed form for circular finite differences."""
    if isinstance(T, FiniteDiffOp):
        return 2.0 * np.sqrt(T.shape.ndim)
    return float(np.sqrt(max(max_eig_power(_NormalOp(T), iters=30, seed=0), 0.0)))


def _tv_prox(v: np.ndarray, weight: float, T: LinOp, iters: int) -> np.ndarray:
    """argmin_u 0.5||u - v||^2 + weight ||T u||_1 by a short PDHG loop."""
    norm_t = _op_norm(T)
    sigma = tau = 1.0 / max(norm_t, 1e-12)
    x = v.copy()
    z = x.copy()
    p = np.zeros(T.out_dim, dtype=np.complex128)
    for _ in range(iters):
        p = _clamp_magnitude(p + sigma * T.forward(z), weight)
        x_new = (x - tau * T.adjoint(p) + tau * v) / (1.0 + tau)
        z = 2.0 * x_new - x
        x = x_new
    return x


class _NormalOp(LinOp):
    """A^H A as a square operator, sharing A's counters."""

    def __init__(self, a: LinOp):
        super().__init__(a.in_dim, a.in_dim)
        self._a = a

    def _forward(self, x):
        return self._a.adjoint(self._a.forward(x))

    _adjoint = _forward

    def _counters(self):
        return self._a._counters() + (self.counter,)


def normal_max_eig(a: LinOp, iters: int = 30, seed: int = 0) -> float:
    """Power-iteration estimate of lambda_max(A^H A); does not tick counters."""
    return max_eig_power(_NormalOp(a), iters=iters, seed=seed)


def composite_objective(a: LinOp, y: np.ndarray, reg: Regularizer | None, x: np.ndarray) -> float:
    """0.5||Ax - y||^2 + g(x), evaluated with counters paused."""
    with a.paused_counts():
        r = a.forward(x) - y
    obj = 0.5 * float(np.linalg.norm(r) ** 2)
    if reg is not None:
        obj += reg.value(x)
    return obj


def _coil_count(a: LinOp) -> int:
    return a.counts.get("coil_transform", 0)


# ---------------------------------------------------------------------------
# conjugate gradient


def _cg_loop(matvec, b, x0, max_iters, tol_abs, history=None):
    """Plain CG on M x = b; returns (x, iterations, residual norms)."""
    x = x0.copy()
    r = b - matvec(x) if np.any(x) else b.copy()
    p = r.copy()
    rs = float(np.real(np.vdot(r, r)))
    res_hist = [np.sqrt(rs)]
    it = 0
    for it in range(1, max_iters + 1):
        if np.sqrt(rs) <= tol_abs:
            it -= 1
            break
        mp = matvec(p)
        denom = float(np.real(np.vdot(p, mp)))
        if denom <= 0:
            break
        alpha = rs / denom
        x = x + alpha * p
        r = r - alpha * mp
        rs_new = float(np.real(np.vdot(r, r)))
        res_hist.append(np.sqrt(rs_new))
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x, it, np.array(res_hist)


def cg_normal(
    a: LinOp, y: np.ndarray, lam: float, x0: Image, cfg: SolverConfig
) -> SolveResult:
    """Solve (A^H A + lam I) x = A^H y by conjugate gradient.

    Stops when the residual drops below tol * ||A^H y|| or at max_iters.
    The recorded history is the CG residual norm per iteration.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    t0 = time.perf_counter()
    n0 = _coil_count(a)
    b = a.adjoint(y)
    tol_abs = cfg.tol * float(np.linalg.norm(b))

    def matvec(v):
        return a.adjoint(a.forward(v)) + lam * v

    x, iters, res = _cg_loop(matvec, b, x0.values, cfg.max_iters, tol_abs)
    return SolveResult(
        x=Image(x0.shape, x),
        iterations_run=iters,
        objective_history=res if cfg.record_history else np.empty(0),
        coil_transform_count=_coil_count(a) - n0,
        wall_time=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# FISTA


def fista(
    grad,
    prox,
    L: float,
    x0: Image,
    cfg: SolverConfig,
    objective=None,
    op_for_count: LinOp | None = None,
) -> SolveResult:
    """FISTA with Nesterov momentum t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2.

    `grad` is the gradient of the smooth term (Lipschitz constant <= L),
    `prox(v, step)` the proximal map of the nonsmooth term.  When
    `cfg.record_history` is set and `objective` is given, the objective is
    recorded each iteration (without advancing cost counters).
    """
    if L <= 0:
        raise ValueError("Lipschitz constant must be positive")
    t0 = time.perf_counter()
    n0 = _coil_count(op_for_count) if op_for_count is not None else 0
    step = 1.0 / L
    x = x0.values.copy()
    z = x.copy()
    t_k = 1.0
    hist = []
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        x_new = prox(z - step * grad(z), step)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k * t_k))
        z = x_new + ((t_k - 1.0) / t_next) * (x_new - x)
        delta = float(np.linalg.norm(x_new - x))
        x_norm = float(np.linalg.norm(x))
        x = x_new
        t_k = t_next
        if cfg.record_history and objective is not None:
            hist.append(objective(x))
        if x_norm > 0 and delta / x_norm < cfg.tol:
            break
    return SolveResult(
        x=Image(x0.shape, x),
        iterations_run=iters,
        objective_history=np.array(hist),
        coil_transform_count=(_coil_count(op_for_count) - n0) if op_for_count is not None else 0,
        wall_time=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# PDHG (Chambolle-Pock, theta = 1)


def pdhg(
    K: LinOp,
    prox_fdual,
    prox_g,
    x0: Image,
    cfg: SolverConfig,
    norm_K: float | None = None,
    objective=None,
    op_for_count: LinOp | None = None,
) -> SolveResult:
    """Chambolle-Pock primal-dual iteration for min_x g(x) + f(K x).

    `prox_fdual(p, sigma)` is the prox of f*'s dual variable update and
    `prox_g(v, tau)` the primal prox.  Steps satisfy
    sigma * tau * ||K||^2 = 1 with the sigma/tau ratio from the config.
    """
    t0 = time.perf_counter()
    n0 = _coil_count(op_for_count) if op_for_count is not None else 0
    if norm_K is None:
        norm_K = np.sqrt(max(normal_max_eig(K, iters=30, seed=0), 1e-30))
    ratio = np.sqrt(cfg.pdhg_sigma_tau_ratio)
    sigma = ratio / norm_K * cfg.step_scale
    tau = 1.0 / (ratio * norm_K) * cfg.step_scale
    if sigma * tau * norm_K**2 > 1.0 + 1e-12:
        raise ValueError("step-size product violates sigma*tau*||K||^2 <= 1")
    x = x0.values.copy()
    z = x.copy()
    p = np.zeros(K.out_dim, dtype=np.complex128)
    hist = []
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        p = prox_fdual(p + sigma * K.forward(z), sigma)
        x_new = prox_g(x - tau * K.adjoint(p), tau)
        z = 2.0 * x_new - x
        delta = float(np.linalg.norm(x_new - x))
        x_norm = float(np.linalg.norm(x))
        x = x_new
        if cfg.record_history and objective is not None:
            hist.append(objective(x))
        if x_norm > 0 and delta / x_norm < cfg.tol:
            break
    return SolveResult(
        x=Image(x0.shape, x),
        iterations_run=iters,
        objective_history=np.array(hist),
        coil_transform_count=(_coil_count(op_for_count) - n0) if op_for_count is not None else 0,
        wall_time=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# accelerated proximal SGD over coil batches


def accproxsgd(
    op: SenseOperator,
    y: np.ndarray,
    reg: Regularizer,
    batch: int,
    alpha0: float,
    beta: float,
    beta_min: float,
    x0: Image,
    cfg: SolverConfig,
    seed: int = 0,
    objective=None,
) -> SolveResult:
    """Accelerated proximal SGD: random coil batches, decaying steps.

    Each iteration samples `batch` coils uniformly without replacement,
    forms the unbiased gradient estimate (C/batch) sum_c A_c^H(A_c x - y_c),
    takes a Nesterov momentum step with step size
    alpha_t = max(beta^t * alpha0, beta_min), and applies the regularizer
    prox.  Each iteration costs one forward and one adjoint of the batch
    sub-operator (2*batch coil transforms).
    """
    n_coils = op.n_coils
    if not 1 <= batch <= n_coils:
        raise ValueError(f"batch must be in [1, {n_coils}], got {batch}")
    t0 = time.perf_counter()
    n0 = _coil_count(op)
    rng = seed_stream(seed, 0)
    y_mat = y.reshape(n_coils, op.n_points)
    scale = n_coils / batch
    x = x0.values.copy()
    z = x.copy()
    t_k = 1.0
    hist = []
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        idx = np.sort(rng.choice(n_coils, size=batch, replace=False))
        sub = op.coil_subset(idx)
        resid = sub.forward(z) - y_mat[idx].ravel()
        g = scale * sub.adjoint(resid)
        alpha = max(beta**iters * alpha0, beta_min)
        x_new = reg.prox(z - alpha * g, alpha)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k * t_k))
        z = x_new + ((t_k - 1.0) / t_next) * (x_new - x)
        delta = float(np.linalg.norm(x_new - x))
        x_norm = float(np.linalg.norm(x))
        x = x_new
        t_k = t_next
        if cfg.record_history and objective is not None:
            hist.append(objective(x))
        if x_norm > 0 and delta / x_norm < cfg.tol:
            break
    return SolveResult(
        x=Image(x0.shape, x),
        iterations_run=iters,
        objective_history=np.array(hist),
        coil_transform_count=_coil_count(op) - n0,
        wall_time=time.perf_counter() - t0,
    )


# ---------------------------------------------------------------------------
# solver dispatch for the three regularizer pairings


def reconstruct(
    a: SenseOperator,
    y: np.ndarray,
    reg: Regularizer,
    cfg: SolverConfig,
    x0: Image | None = None,
    solver: str | None = None,
    lipschitz: float | None = None,
) -> SolveResult:
    """Solve min_x 0.5||Ax - y||^2 + g(x) with the paired solver.

    l2 -> CG on the normal equations, l1-wavelet -> FISTA, l1-tv -> PDHG
    with the data-consistency prox computed by inner CG.
    """
    if x0 is None:
        x0 = Image(a.maps.shape, np.zeros(a.in_dim, dtype=np.complex128))
    solver = solver or {"l2": "cg", "l1-wavelet": "fista", "l1-tv": "pdhg"}[reg.kind]
    if solver == "cg":
        if reg.kind != "l2":
            raise ValueError("cg solves the l2-regularized problem")
        return cg_normal(a, y, reg.lam, x0, cfg)
    if solver == "fista":
        if lipschitz is None:
            lipschitz = normal_max_eig(a) / cfg.step_scale

        def grad(v):
            return a.adjoint(a.forward(v) - y)

        return fista(
            grad,
            reg.prox,
            lipschitz,
            x0,
            cfg,
            objective=lambda v: composite_objective(a, y, reg, v),
            op_for_count=a,
        )
    if solver == "pdhg":
        if reg.kind != "l1-tv":
            raise ValueError("pdhg is paired with the l1-tv regularizer")

        def prox_data(v, tau):
            # argmin_u 0.5||Au - y||^2 + ||u - v||^2/(2 tau), solved for the
            # update w = u - v by inner_cg_iters CG steps from w = 0; the
            # right-hand side costs one extra normal-operator application.
            rhs = a.adjoint(y - a.forward(v))

            def matvec(w):
                return a.adjoint(a.forward(w)) + w / tau

            w, _, _ = _cg_loop(matvec, rhs, np.zeros_like(v), cfg.inner_cg_iters, 0.0)
            return v + w

        def prox_dual(p, sigma):
            return _clamp_magnitude(p, reg.lam)

        return pdhg(
            reg.transform,
            prox_dual,
            prox_data,
            x0,
            cfg,
            norm_K=_op_norm(reg.transform),
            objective=lambda v: composite_objective(a, y, reg, v),
            op_for_count=a,
        )
    raise ValueError(f"unknown solver {solver!r}")
