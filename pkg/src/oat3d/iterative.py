"""Penalized least-squares reconstruction.

Both solvers minimize ``||u - H theta||_w^2 + penalty(theta)`` where the
weighted norm counts every interior frequency twice (see
:meth:`SystemOperator.norm_sq`).

* PLS-Q: quadratic Laplacian penalty, Fletcher-Reeves conjugate gradients
  with exact line search.
* PLS-TV: total-variation penalty with a non-negativity constraint, solved by
  FISTA; the proximal step is computed by the dual gradient-projection method
  of Beck and Teboulle (FGP).

Neighbours outside the volume are replaced by the nearest face voxel, so
constant images carry no penalty.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError, ShapeMismatchError

# ---------------------------------------------------------------- Laplacian


def _second_diff(x: np.ndarray, axis: int) -> np.ndarray:
    # 2 x[n] - x[n-1] - x[n+1] with clamped indices.
    x = np.moveaxis(x, axis, 0)
    prev = np.concatenate([x[:1], x[:-1]])
    nxt = np.concatenate([x[1:], x[-1:]])
    return np.moveaxis(2.0 * x - prev - nxt, 0, axis)


def _second_diff_t(v: np.ndarray, axis: int) -> np.ndarray:
    # Transpose of _second_diff.
    v = np.moveaxis(v, axis, 0)
    out = 2.0 * v
    # transpose of the "previous" shift: x[max(n-1, 0)]
    out[0] -= v[0] + v[1]
    out[1:-1] -= v[2:]
    # transpose of the "next" shift: x[min(n+1, N-1)]
    out[1:] -= v[:-1]
    out[-1] -= v[-1]
    return np.moveaxis(out, 0, axis)


def _check_volume(theta, min_dim: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 3:
        raise ShapeMismatchError("expected a 3D volume")
    if min(theta.shape) < min_dim:
        raise ShapeMismatchError(f"every grid dimension must be >= {min_dim}, got {theta.shape}")
    return theta


def laplacian_penalty(theta) -> float:
    """Sum over voxels and axes of squared second differences."""
    theta = _check_volume(theta, 3)
    return float(sum(np.sum(_second_diff(theta, a) ** 2) for a in range(3)))


def laplacian_penalty_gradient(theta) -> np.ndarray:
    theta = _check_volume(theta, 3)
    return 2.0 * sum(_second_diff_t(_second_diff(theta, a), a) for a in range(3))


# ----------------------------------------------------------------------- TV


def forward_diff(x: np.ndarray) -> np.ndarray:
    """Backward differences ``x[n] - x[n-1]`` per axis, zero on the first
    slice; shape (3, *x.shape)."""
    g = np.zeros((3,) + x.shape)
    g[0, 1:] = x[1:] - x[:-1]
    g[1, :, 1:] = x[:, 1:] - x[:, :-1]
    g[2, :, :, 1:] = x[:, :, 1:] - x[:, :, :-1]
    return g


def forward_diff_t(g: np.ndarray) -> np.ndarray:
    """Transpose of :func:`forward_diff`."""
    out = np.zeros(g.shape[1:])
    out[1:] += g[0, 1:]
    out[:-1] -= g[0, 1:]
    out[:, 1:] += g[1, :, 1:]
    out[:, :-1] -= g[1, :, 1:]
    out[:, :, 1:] += g[2, :, :, 1:]
    out[:, :, :-1] -= g[2, :, :, 1:]
    return out


def tv_norm(theta) -> float:
    """Isotropic TV with one-sided differences."""
    theta = _check_volume(theta, 2)
    g = forward_diff(theta)
    return float(np.sum(np.sqrt(np.sum(g * g, axis=0))))


def tv_prox(b: np.ndarray, weight: float, inner_iters: int = 20, nonneg: bool = True,
            dual: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``argmin_x 0.5 ||x - b||^2 + weight * TV(x)`` (with ``x >= 0`` if
    ``nonneg``) by FGP on the dual; returns ``(x, dual)`` so the caller can
    warm-start the next call.
    """
    def project_c(x):
        return np.maximum(x, 0.0) if nonneg else x

    if weight <= 0:
        return project_c(b), dual
    p = np.zeros((3,) + b.shape) if dual is None else dual
    r = p.copy()
    t = 1.0
    step = 1.0 / (12.0 * weight)
    for _ in range(inner_iters):
        x = project_c(b - weight * forward_diff_t(r))
        q = r + step * forward_diff(x)
        norm = np.maximum(1.0, np.sqrt(np.sum(q * q, axis=0)))
        p_new = q / norm
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        r = p_new + ((t - 1.0) / t_new) * (p_new - p)
        p, t = p_new, t_new
    return project_c(b - weight * forward_diff_t(p)), p


# ------------------------------------------------------------------ solvers


@dataclass(frozen=True)
class PlsQConfig:
    alpha: float = 0.0
    max_iters: int = 50
    rel_tol: float = 1e-4
    restart_every: int = 50

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ConfigError("alpha must be non-negative")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.restart_every < 1:
            raise ConfigError("restart_every must be >= 1")


@dataclass(frozen=True)
class PlsTvConfig:
    lambda_tv: float = 0.0
    max_iters: int = 50
    rel_tol: float = 1e-4
    lipschitz: float | None = None
    inner_iters: int = 20
    nonneg: bool = True
    power_iters: int = 30

    def __post_init__(self):
        if not self.lambda_tv >= 0:
            raise ConfigError("lambda_tv must be non-negative")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.inner_iters < 1:
            raise ConfigError("inner_iters must be >= 1")
        if self.lipschitz is not None and not self.lipschitz > 0:
            raise ConfigError("lipschitz must be positive")


@dataclass
class SolverResult:
    theta: np.ndarray
    trace: list = field(default_factory=list)  # (iteration, fidelity, penalty, total)
    best_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    lipschitz: float | None = None

    @property
    def costs(self) -> np.ndarray:
        return np.array([row[3] for row in self.trace])


def write_trace_csv(path, result: SolverResult):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "fidelity", "penalty", "total"])
        for row in result.trace:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def _prepare(data, op, theta0):
    data = np.asarray(data)
    if data.shape != op.data_shape:
        raise ShapeMismatchError(f"data shape {data.shape}, operator expects {op.data_shape}")
    if theta0 is None:
        theta = np.zeros(op.grid.dims)
    else:
        theta = np.array(theta0, dtype=float).reshape(op.grid.dims)
    return data, theta


def _finite(value: float, what: str):
    if not math.isfinite(value):
        raise NumericalError(f"non-finite {what}")


def solve_plsq(data, op, cfg: PlsQConfig = PlsQConfig(), theta0=None,
               callback=None) -> SolverResult:
    """Minimize ``||u - H theta||_w^2 + alpha R(theta)`` by Fletcher-Reeves CG.

    One forward and one adjoint application per iteration.
    """
    data, theta = _prepare(data, op, theta0)
    alpha = cfg.alpha
    resid = data - op.apply(theta) if np.any(theta) else data.copy()

    def penalty(x):
        return alpha * laplacian_penalty(x) if alpha > 0 else 0.0

    def gradient(x, r):
        g = -2.0 * op.apply_adjoint(r)
        if alpha > 0:
            g += alpha * laplacian_penalty_gradient(x)
        return g

    fid = op.norm_sq(resid)
    pen = penalty(theta)
    total = fid + pen
    _finite(total, "cost")
    res = SolverResult(theta, [(0, fid, pen, total)], [(0, total)])
    g = gradient(theta, resid)
    gg = float(np.vdot(g, g))
    d = -g
    for k in range(1, cfg.max_iters + 1):
        gd = float(np.vdot(g, d))
        if gg == 0.0 or gd >= 0.0:
            res.converged = True
            break
        hd = op.apply(d)
        curv = op.norm_sq(hd) + penalty(d)
        _finite(curv, "curvature")
        if curv <= 0.0:
            res.converged = True
            break
        s = -gd / (2.0 * curv)
        theta = theta + s * d
        resid = resid - s * hd
        fid = op.norm_sq(resid)
        pen = penalty(theta)
        prev, total = total, fid + pen
        _finite(total, "cost")
        res.trace.append((k, fid, pen, total))
        res.best_trace.append((k, min(total, res.best_trace[-1][1])))
        res.iterations = k
        if callback is not None:
            callback(k, theta)
        if abs(prev - total) <= cfg.rel_tol * max(abs(prev), np.finfo(float).tiny):
            res.converged = True
            break
        g_new = gradient(theta, resid)
        gg_new = float(np.vdot(g_new, g_new))
        if k % cfg.restart_every == 0:
            d = -g_new
        else:
            d = -g_new + (gg_new / gg) * d
        g, gg = g_new, gg_new
    res.theta = theta
    return res


def estimate_lipschitz(op, iters: int = 30, safety: float = 1.05, seed: int = 0) -> float:
    """Lipschitz constant ``2 * safety * lambda_max(H^T W H)`` of the fidelity
    gradient, by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.grid.dims)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = op.normal(v)
        lam = float(np.vdot(v, w))
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            break
        v = w / nrm
    _finite(lam, "power-iteration eigenvalue")
    return 2.0 * safety * max(lam, 0.0)


def solve_plstv(data, op, cfg: PlsTvConfig = PlsTvConfig(), theta0=None,
                callback=None) -> SolverResult:
    """Minimize ``||u - H theta||_w^2 + lambda_tv TV(theta)``, ``theta >= 0``,
    by FISTA. One forward and one adjoint application per iteration; the
    forward image of the momentum point is formed by linearity.
    """
    data, x = _prepare(data, op, theta0)
    lip = cfg.lipschitz if cfg.lipschitz is not None else estimate_lipschitz(op, cfg.power_iters)
    if not lip > 0:
        raise NumericalError("Lipschitz estimate is zero; the operator has no range")
    lam = cfg.lambda_tv

    def penalty(v):
        return lam * tv_norm(v) if lam > 0 else 0.0

    hx = op.apply(x) if np.any(x) else np.zeros(op.data_shape, dtype=complex)
    fid = op.norm_sq(data - hx)
    pen = penalty(x)
    total = fid + pen
    _finite(total, "cost")
    res = SolverResult(x, [(0, fid, pen, total)], [(0, total)], lipschitz=lip)
    y, hy = x, hx
    t = 1.0
    dual = None
    for k in range(1, cfg.max_iters + 1):
        grad = -2.0 * op.apply_adjoint(data - hy)
        x_new, dual = tv_prox(y - grad / lip, lam / lip, cfg.inner_iters, cfg.nonneg, dual)
        hx_new = op.apply(x_new)
        fid = op.norm_sq(data - hx_new)
        pen = penalty(x_new)
        prev, total = total, fid + pen
        _finite(total, "cost")
        res.trace.append((k, fid, pen, total))
        res.best_trace.append((k, min(total, res.best_trace[-1][1])))
        res.iterations = k
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_new
        y = x_new + mom * (x_new - x)
        hy = hx_new + mom * (hx_new - hx)
        x, hx, t = x_new, hx_new, t_new
        if callback is not None:
            callback(k, x)
        if abs(prev - total) <= cfg.rel_tol * max(abs(prev), np.finfo(float).tiny):
            res.converged = True
            break
    res.theta = x
    return res
