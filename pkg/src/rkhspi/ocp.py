"""Control-affine infinite-horizon problems, HJB/GHJB residuals, the optimal
feedback map, verification checks and closed-loop rollouts.

Problem callables are vectorized over leading axes: ``f(X)`` maps ``(..., N)``
to ``(..., N)``, ``g(X)`` to ``(..., N, M)`` and ``h(X)`` to ``(...)``.  All
operations here accept a single point or a stack of points.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import TrajectoryEscapeError

__all__ = [
    "ControlProblem",
    "Psd",
    "QuadraticBounds",
    "VerificationReport",
    "feedback",
    "ghjb_residual",
    "hjb_residual",
    "running_cost",
    "verify_inequalities",
    "rollout_cost",
    "rollout_costs",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ControlProblem:
    """Data (f, g, h, R, domain) of an infinite-horizon control-affine problem.

    ``domain`` is an axis-aligned box given as ``(lower, upper)``.
    ``initial_policy`` is the feedback the problem ships with for starting
    policy iteration; ``exact_ovf`` is the optimal value function when known.
    """

    f: Callable
    g: Callable
    h: Callable
    R: np.ndarray
    domain: tuple
    exact_ovf: Optional[Callable] = None
    initial_policy: Optional[Callable] = None
    name: str = "problem"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        lower, upper = (np.asarray(b, dtype=float).reshape(-1) for b in self.domain)
        if lower.shape != upper.shape or np.any(lower >= upper):
            raise ValueError("domain must be a nondegenerate box (lower, upper)")
        object.__setattr__(self, "domain", (lower, upper))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if R.shape[0] != R.shape[1] or not np.allclose(R, R.T, rtol=0, atol=1e-12):
            raise ValueError("R must be a symmetric matrix")
        R = 0.5 * (R + R.T)
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "_R_factor", cho_factor(R, lower=True))
        N, M = self.state_dim, self.control_dim

        zero = np.zeros(N)
        f0 = np.asarray(self.f(zero), dtype=float)
        if f0.shape != (N,):
            raise ValueError(f"f must map R^{N} to R^{N}, got shape {f0.shape}")
        if np.abs(f0).max() > 1e-12:
            raise ValueError(f"f(0) must vanish, got max |f(0)| = {np.abs(f0).max():.3e}")
        g0 = np.asarray(self.g(zero), dtype=float)
        if g0.shape != (N, M):
            raise ValueError(f"g must return an ({N}, {M}) matrix, got {g0.shape}")
        if abs(float(self.h(zero))) > 1e-12:
            raise ValueError("h(0) must vanish")
        rng = np.random.default_rng(0)
        pts = rng.uniform(lower, upper, size=(100, N))
        pts = pts[np.linalg.norm(pts, axis=1) > 1e-9]
        if np.any(np.asarray(self.h(pts)) <= 0):
            raise ValueError("h must be positive away from the origin")

    @property
    def state_dim(self):
        return self.domain[0].shape[0]

    @property
    def control_dim(self):
        return self.R.shape[0]

    def solve_R(self, v):
        """R^{-1} v for v of shape (..., M)."""
        v = np.asarray(v, dtype=float)
        flat = v.reshape(-1, self.control_dim).T
        return cho_solve(self._R_factor, flat).T.reshape(v.shape)

    def box_center_halfwidth(self):
        lower, upper = self.domain
        return 0.5 * (lower + upper), 0.5 * (upper - lower)


@dataclass(frozen=True)
class Psd:
    """Check s(x) >= 0."""


@dataclass(frozen=True)
class QuadraticBounds:
    """Check alpha ||x||^2 <= s(x) <= beta ||x||^2."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (0 < self.alpha <= self.beta):
            raise ValueError("need 0 < alpha <= beta")


@dataclass(frozen=True)
class VerificationReport:
    mode: object
    worst_lower_violation: float
    worst_upper_violation: float
    violating_points: np.ndarray
    feasible: bool


def _gx(p, x):
    return np.asarray(p.g(x), dtype=float)


def feedback(p, grad_v, x):
    """u = -1/2 R^{-1} g(x)^T grad_v."""
    grad_v = np.asarray(grad_v, dtype=float)
    x = np.asarray(x, dtype=float)
    if grad_v.shape[-1] != p.state_dim or x.shape[-1] != p.state_dim:
        raise ValueError("dimension mismatch between gradient, state and problem")
    gtv = np.einsum("...nm,...n->...m", _gx(p, x), grad_v)
    return -0.5 * p.solve_R(gtv)


def running_cost(p, x, u):
    """h(x) + <u, R u>."""
    u = np.asarray(u, dtype=float)
    return np.asarray(p.h(x), dtype=float) + np.einsum("...m,mk,...k->...", u, p.R, u)


def ghjb_residual(p, v_val_grad, u, x):
    """<f(x) + g(x) u, grad v(x)> + h(x) + <u, R u>."""
    _, grad_v = v_val_grad
    grad_v = np.asarray(grad_v, dtype=float)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if grad_v.shape[-1] != p.state_dim or u.shape[-1] != p.control_dim:
        raise ValueError("dimension mismatch between gradient, control and problem")
    direction = np.asarray(p.f(x), dtype=float) + np.einsum("...nm,...m->...n", _gx(p, x), u)
    return np.einsum("...n,...n->...", direction, grad_v) + running_cost(p, x, u)


def hjb_residual(p, v_val_grad, x):
    """<f, grad v> - 1/4 ||g^T grad v||^2_{R^{-1}} + h."""
    _, grad_v = v_val_grad
    grad_v = np.asarray(grad_v, dtype=float)
    x = np.asarray(x, dtype=float)
    if grad_v.shape[-1] != p.state_dim:
        raise ValueError("dimension mismatch between gradient and problem")
    gtv = np.einsum("...nm,...n->...m", _gx(p, x), grad_v)
    quad = np.einsum("...m,...m->...", gtv, p.solve_R(gtv))
    fv = np.einsum("...n,...n->...", np.asarray(p.f(x), dtype=float), grad_v)
    return fv - 0.25 * quad + np.asarray(p.h(x), dtype=float)


def verify_inequalities(s, points, mode, tol=1e-10, max_report=20):
    """Check the sign or two-sided quadratic bounds of ``s`` on ``points``.

    Never raises on infeasibility; the report lists up to ``max_report`` of
    the worst violators.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if X.shape[0] == 0:
        return VerificationReport(mode, 0.0, 0.0, np.zeros((0, X.shape[1])), True)
    vals = np.asarray(s(X), dtype=float).reshape(-1)
    if isinstance(mode, Psd):
        lower_gap = -vals
        upper_gap = np.full_like(vals, -np.inf)
    elif isinstance(mode, QuadraticBounds):
        sq = np.einsum("ij,ij->i", X, X)
        lower_gap = mode.alpha * sq - vals
        upper_gap = vals - mode.beta * sq
    else:
        raise TypeError(f"unknown verification mode {mode!r}")
    worst = np.maximum(lower_gap, upper_gap)
    bad = np.flatnonzero(worst > tol)
    order = bad[np.argsort(-worst[bad], kind="stable")][:max_report]
    worst_lower = float(max(lower_gap.max(), 0.0))
    worst_upper = float(max(upper_gap.max(), 0.0))
    return VerificationReport(
        mode=mode,
        worst_lower_violation=worst_lower,
        worst_upper_violation=worst_upper,
        violating_points=X[order],
        feasible=bool(worst_lower <= tol and worst_upper <= tol),
    )


def rollout_costs(p, s, X0, T=30.0, dt=1e-3, stop_norm=1e-9, escape_factor=10.0):
    """Closed-loop cost of the feedback induced by ``s`` from several initial states.

    Integrates x' = f(x) + g(x) u(x) with u = feedback(grad s(x)) using the
    classical RK4 scheme; the running cost is carried as an extra state so it
    is integrated with the same stage weights.

    Returns
    -------
    costs : (n,) array
    final_norms : (n,) array

    Raises
    ------
    TrajectoryEscapeError
        if any trajectory leaves the domain box scaled by ``escape_factor``
        about its center.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_steps = int(round(T / dt))
    if n_steps < 1 or abs(n_steps * dt - T) > 1e-9 * max(T, 1.0) or n_steps > 10**7:
        raise ValueError("T/dt must be a positive integer no larger than 1e7")
    X = np.atleast_2d(np.array(X0, dtype=float))
    if X.shape[1] != p.state_dim:
        raise ValueError("initial states have the wrong dimension")
    center, half = p.box_center_halfwidth()
    limit = escape_factor * half
    cost = np.zeros(X.shape[0])
    active = np.linalg.norm(X, axis=1) >= stop_norm

    def rhs(Z):
        U = feedback(p, s.gradient(Z), Z)
        dz = np.asarray(p.f(Z), dtype=float) + np.einsum("inm,im->in", _gx(p, Z), U)
        return dz, running_cost(p, Z, U)

    for _ in range(n_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Z = X[idx]
        k1, l1 = rhs(Z)
        k2, l2 = rhs(Z + 0.5 * dt * k1)
        k3, l3 = rhs(Z + 0.5 * dt * k2)
        k4, l4 = rhs(Z + dt * k3)
        Z = Z + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        cost[idx] += dt / 6.0 * (l1 + 2 * l2 + 2 * l3 + l4)
        if not np.all(np.isfinite(Z)) or np.any(np.abs(Z - center) > limit):
            raise TrajectoryEscapeError(
                f"closed-loop trajectory left {escape_factor:g}x the domain box"
            )
        X[idx] = Z
        active[idx] = np.linalg.norm(Z, axis=1) >= stop_norm
    return cost, np.linalg.norm(X, axis=1)


def rollout_cost(p, s, x0, T=30.0, dt=1e-3, **kwargs):
    """Single-trajectory version of :func:`rollout_costs`; returns (cost, final_norm)."""
    costs, norms = rollout_costs(p, s, np.asarray(x0, dtype=float)[None, :], T, dt, **kwargs)
    return float(costs[0]), float(norms[0])
