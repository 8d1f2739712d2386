"""Continuous-time algebraic Riccati equation of the linearized problem.

Newton-Kleinman iteration with Kronecker-vectorized Lyapunov solves.  The
Kronecker system has size N^2, so this is meant for N up to about 50.
"""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, LinAlgWarning, solve

from .exceptions import CAREError

__all__ = [
    "LinearizedSystem",
    "linearize",
    "solve_lyapunov",
    "solve_care",
    "care_residual",
    "lqr_bounds",
    "lqr_feedback",
]

logger = logging.getLogger(__name__)

# residual level accepted once Newton-Kleinman stops contracting
_FLOOR = 1e-9


@dataclass(frozen=True)
class LinearizedSystem:
    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float).reshape(A.shape[0], -1)
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if A.shape[0] != A.shape[1] or Q.shape != A.shape or R.shape != (B.shape[1],) * 2:
            raise ValueError("inconsistent shapes in linearized system")
        for name, val in (("A", A), ("B", B), ("Q", 0.5 * (Q + Q.T)), ("R", 0.5 * (R + R.T))):
            if not np.all(np.isfinite(val)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, val)


def linearize(p, fd_step=1e-6, hess_step=1e-4):
    """A = Df(0), B = g(0), Q = 1/2 Hess h(0) by central differences."""
    N = p.state_dim
    eye = np.eye(N)
    zero = np.zeros(N)
    cols = [(np.asarray(p.f(fd_step * e)) - np.asarray(p.f(-fd_step * e))) / (2 * fd_step) for e in eye]
    A = np.column_stack(cols)
    B = np.asarray(p.g(zero), dtype=float)
    t = hess_step
    h = p.h
    h0 = float(h(zero))
    H = np.empty((N, N))
    for i in range(N):
        H[i, i] = (float(h(t * eye[i])) - 2 * h0 + float(h(-t * eye[i]))) / t**2
        for j in range(i + 1, N):
            pp = float(h(t * (eye[i] + eye[j])))
            pm = float(h(t * (eye[i] - eye[j])))
            mp = float(h(t * (-eye[i] + eye[j])))
            mm = float(h(-t * (eye[i] + eye[j])))
            H[i, j] = H[j, i] = (pp - pm - mp + mm) / (4 * t**2)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(H))):
        raise ValueError("non-finite derivatives while linearizing")
    return LinearizedSystem(A, B, 0.5 * H, p.R)


def solve_lyapunov(F, W):
    """Solve F^T X + X F = -W for symmetric X (Kronecker-vectorized)."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    n = F.shape[0]
    I = np.eye(n)
    # column-major vec: vec(F^T X) = (I kron F^T) vec X, vec(X F) = (F^T kron I) vec X
    L = np.kron(I, F.T) + np.kron(F.T, I)
    try:
        with warnings.catch_warnings(), np.errstate(divide="ignore", invalid="ignore"):
            # scipy only warns when the operator is singular to working precision
            warnings.simplefilter("error", LinAlgWarning)
            x = solve(L, -W.reshape(-1, order="F"), check_finite=True)
    except (LinAlgError, LinAlgWarning) as exc:
        raise LinAlgError("singular Lyapunov operator: F has eigenvalue pairs summing to zero") from exc
    if not np.all(np.isfinite(x)):
        raise LinAlgError("singular Lyapunov operator: F has eigenvalue pairs summing to zero")
    X = x.reshape(n, n, order="F")
    return 0.5 * (X + X.T)


def care_residual(sys, P):
    """A^T P + P A - P B R^{-1} B^T P + Q."""
    BRB = sys.B @ solve(sys.R, sys.B.T, assume_a="pos")
    return sys.A.T @ P + P @ sys.A - P @ BRB @ P + sys.Q


def _is_hurwitz(M):
    return bool(np.max(np.linalg.eigvals(M).real) < 0)


def _initial_gain(sys):
    A, B, R = sys.A, sys.B, sys.R
    M = B.shape[1]
    if _is_hurwitz(A):
        return np.zeros((M, A.shape[0]))
    # Bass construction: (A + sI) Z + Z (A + sI)^T = 2 B R^{-1} B^T makes
    # A - B R^{-1} B^T Z^{-1} Hurwitz whenever (A, B) is controllable
    sigma = 1.0 + max(0.0, float(np.max(np.abs(np.linalg.eigvals(A).real))))
    BRB = B @ solve(R, B.T, assume_a="pos")
    Z = solve_lyapunov(-(A + sigma * np.eye(A.shape[0])).T, 2.0 * BRB)
    try:
        K0 = solve(R, B.T @ np.linalg.inv(Z))
    except LinAlgError as exc:
        raise CAREError("no stabilizing initial gain: (A, B) appears uncontrollable") from exc
    if not _is_hurwitz(A - B @ K0):
        raise CAREError("no stabilizing initial gain found for the linearized system")
    return K0


def solve_care(sys, tol=1e-12, max_iter=100, return_history=False):
    """Stabilizing solution of the CARE by Newton-Kleinman iteration.

    Stops when ``||residual||_F < tol (1 + ||Q||_F)``.  With
    ``return_history=True`` the per-iteration residual norms are returned too.
    """
    A, B, Q, R = sys.A, sys.B, sys.Q, sys.R
    K = _initial_gain(sys)
    qscale = 1.0 + np.linalg.norm(Q)
    history = []
    P = None
    for it in range(max_iter):
        F = A - B @ K
        try:
            P = solve_lyapunov(F, Q + K.T @ R @ K)
        except LinAlgError as exc:
            raise CAREError(f"Lyapunov step failed at iteration {it}") from exc
        res = float(np.linalg.norm(care_residual(sys, P)))
        history.append(res)
        if res < tol * qscale:
            break
        # quadratic convergence has hit the roundoff floor
        if it > 0 and res >= 0.5 * history[-2] and res < _FLOOR * qscale:
            break
        K = solve(R, B.T @ P)
    else:
        raise CAREError(f"Newton-Kleinman stagnated: residual {history[-1]:.3e} after {max_iter} iterations")
    eigs = np.linalg.eigvalsh(P)
    if eigs.min() <= 0:
        raise CAREError("Riccati solution is not positive definite")
    logger.debug("CARE converged in %d iterations, residual %.3e", len(history), history[-1])
    if return_history:
        return P, history
    return P


def lqr_bounds(P):
    """(1/2 lambda_min(P), 2 lambda_max(P))."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if not np.allclose(P, P.T, rtol=1e-10, atol=1e-12):
        raise ValueError("P must be symmetric")
    eigs = np.linalg.eigvalsh(0.5 * (P + P.T))
    if eigs.min() <= 0:
        raise ValueError("P must be positive definite")
    return 0.5 * float(eigs.min()), 2.0 * float(eigs.max())


def lqr_feedback(sys, P):
    """Closure x -> -R^{-1} B^T P x (vectorized over leading axes)."""
    gain = solve(sys.R, sys.B.T @ P)

    def u0(x):
        return -np.asarray(x, dtype=float) @ gain.T

    return u0
