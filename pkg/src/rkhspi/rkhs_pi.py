"""Policy iteration in an RKHS with residual-driven greedy center selection.

Each policy-evaluation step is a minimal-norm interpolation of the
generalized HJB equation at the centers: the functionals are
``DirGrad(x_i, f(x_i) + g(x_i) u(x_i))`` with targets ``-h(x_i) - <u_i, R u_i>``,
plus ``PointEval(0)`` with target 0 unless the kernel already forces
``v(0) = 0``.  That interpolation is also the Gauss-Newton step of the
nonlinear recovery problem for the HJB equation, so no separate
Gauss-Newton path exists.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_solve

from .exceptions import DegenerateGramError, WellPosednessError
from .functionals import FunctionalSet, symmetrize_upper
from .kernels import QuadraticProductKernel
from .ocp import Psd, feedback, ghjb_residual, running_cost, verify_inequalities
from .recovery import factor_gram, solve_linear_recovery

__all__ = [
    "GreedyConfig",
    "PIConfig",
    "PIRecord",
    "GreedyTrace",
    "PIHistory",
    "PIAbort",
    "build_pe_functionals",
    "policy_evaluation",
    "policy_improvement",
    "greedy_select",
    "run_rkhs_pi",
    "res_ghjb",
    "error_pi",
    "rank_diagnostic",
]

logger = logging.getLogger(__name__)

# directions shorter than this make the policy-evaluation step ill-posed
DIRECTION_TOL = 1e-14
# relative GHJB residual accepted at the centers after a solve
POSTCHECK_TOL = 1e-6
# |s(0)| accepted after a solve, relative to the largest target
ORIGIN_TOL = 1e-8
# cap on (row, coordinate) entries per cross-Gram column chunk
_COLUMN_BUDGET = 4_000_000


def _points(X, name, dim=None):
    X = np.array(X, dtype=float, ndmin=2)
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise ValueError(f"{name} must be a finite (n, N) array")
    if dim is not None and X.shape[0] and X.shape[1] != dim:
        raise ValueError(f"{name} has dimension {X.shape[1]}, expected {dim}")
    return X


def _check_distinct_origin_free(X, name):
    if X.shape[0] and np.any(np.linalg.norm(X, axis=1) < 1e-12):
        raise ValueError(f"{name} must not contain the origin")
    if np.unique(X, axis=0).shape[0] != X.shape[0]:
        raise ValueError(f"{name} must contain pairwise distinct points")


@dataclass(frozen=True, eq=False)
class GreedyConfig:
    candidate_pool: np.ndarray
    max_centers: int
    target_residual: float = 0.0
    batch: int = 1

    def __post_init__(self):
        X = _points(self.candidate_pool, "candidate_pool")
        if X.shape[0] == 0:
            raise ValueError("candidate pool is empty")
        _check_distinct_origin_free(X, "candidate_pool")
        X.setflags(write=False)
        object.__setattr__(self, "candidate_pool", X)
        if int(self.max_centers) < 1 or int(self.batch) < 1:
            raise ValueError("max_centers and batch must be positive")
        if not self.target_residual >= 0:
            raise ValueError("target_residual must be nonnegative")


@dataclass(frozen=True, eq=False)
class PIConfig:
    """Stopping rule, verification and metric settings for the PI loop.

    ``verification_points`` defaults to the centers.  ``training_points``
    (for Res-GHJB) defaults to the greedy candidate pool.  Error-PI is
    recorded when test points are given and a reference is available, either
    passed here or as the problem's exact value function.
    """

    epsilon: float
    max_pi_iters: int = 10
    verification_mode: object = field(default_factory=Psd)
    verification_points: Optional[np.ndarray] = None
    jitter: object = "auto"
    training_points: Optional[np.ndarray] = None
    test_points: Optional[np.ndarray] = None
    reference: Optional[Callable] = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if int(self.max_pi_iters) < 1:
            raise ValueError("max_pi_iters must be at least 1")


@dataclass(frozen=True)
class PIRecord:
    iter: int
    e_eta: float
    res_ghjb: float
    error_pi: Optional[float]
    verification: object
    n_centers: int
    rkhs_norm: float
    jitter_used: float


@dataclass
class GreedyTrace:
    n_centers: list = field(default_factory=list)
    res_ghjb: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    # pool points that count as training points (skipped candidates excluded)
    training_mask: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.n_centers)


@dataclass
class PIHistory:
    records: list = field(default_factory=list)
    greedy: GreedyTrace = field(default_factory=GreedyTrace)
    converged: bool = False
    max_iters_hit: bool = False

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]


class PIAbort(RuntimeError):
    """Policy iteration stopped early; ``history`` holds the completed iterations."""

    def __init__(self, message, history, surrogate=None):
        super().__init__(message)
        self.history = history
        self.surrogate = surrogate


def _needs_origin(k):
    return not isinstance(k, QuadraticProductKernel)


def _directions(p, X, U):
    return np.asarray(p.f(X), dtype=float) + np.einsum("inm,im->in", np.asarray(p.g(X), dtype=float), U)


def _controls(U, n, M):
    U = np.asarray(U, dtype=float)
    if U.ndim == 1 and M == 1:
        U = U[:, None]
    if U.shape != (n, M):
        raise ValueError(f"expected controls of shape ({n}, {M}), got {U.shape}")
    return U


def build_pe_functionals(p, k, centers, u_vals):
    """Functionals of the policy-evaluation interpolation problem.

    Returns ``[PointEval(0)] + [DirGrad(x_i, f(x_i) + g(x_i) u_i)]``; the point
    evaluation at the origin is left out for product kernels, where it is the
    zero functional.
    """
    X = _points(centers, "centers", p.state_dim)
    _check_distinct_origin_free(X, "centers")
    U = _controls(u_vals, X.shape[0], p.control_dim)
    D = _directions(p, X, U)
    bad = np.flatnonzero(np.linalg.norm(D, axis=1) < DIRECTION_TOL)
    if bad.size:
        raise WellPosednessError(
            f"f(x) + g(x)u(x) vanishes at {bad.size} center(s), first index {bad[0]}; "
            "the policy-evaluation step is not well-posed there",
            indices=bad.tolist(),
        )
    N = p.state_dim
    is_grad = np.ones(X.shape[0], dtype=bool)
    if _needs_origin(k):
        X = np.vstack([np.zeros((1, N)), X])
        D = np.vstack([np.zeros((1, N)), D])
        is_grad = np.concatenate([[False], is_grad])
    return FunctionalSet(X, D, is_grad)


def policy_evaluation(p, k, centers, u_vals, jitter="auto"):
    """Minimal-norm solution of the GHJB equation for policy values ``u_vals`` at ``centers``."""
    X = _points(centers, "centers", p.state_dim)
    U = _controls(u_vals, X.shape[0], p.control_dim)
    fs = build_pe_functionals(p, k, X, U)
    cost = running_cost(p, X, U)
    targets = -cost
    if _needs_origin(k):
        targets = np.concatenate([[0.0], targets])
    rep = solve_linear_recovery(fs, targets, k, jitter=jitter)
    s = rep.surrogate
    scale = 1.0 + np.abs(np.asarray(p.h(X), dtype=float))
    resid = np.abs(ghjb_residual(p, (None, s.gradient(X)), U, X))
    worst = float(np.max(resid / scale)) if resid.size else 0.0
    origin = abs(s(np.zeros(p.state_dim))) if _needs_origin(k) else 0.0
    if worst > POSTCHECK_TOL or origin > ORIGIN_TOL * (1.0 + float(np.max(np.abs(targets), initial=0.0))):
        logger.warning(
            "policy evaluation misses its constraints: relative GHJB residual %.3e, |s(0)| = %.3e "
            "(jitter %.3e, %d functionals)",
            worst,
            origin,
            rep.regularization_used,
            len(fs),
        )
    return rep


def policy_improvement(p, s):
    """Feedback law ``x -> -1/2 R^{-1} g(x)^T grad s(x)``."""

    def u(x):
        return feedback(p, s.gradient(x), x)

    return u


def _nu(p, s, u0, X):
    U = _controls(u0(X), X.shape[0], p.control_dim)
    c = running_cost(p, X, U)
    r = ghjb_residual(p, (None, s.gradient(X)), U, X)
    return np.abs(r / c)


def res_ghjb(p, s, u0, training_points):
    """Largest relative GHJB residual of ``s`` under the initial policy ``u0``."""
    X = _points(training_points, "training_points", p.state_dim)
    if X.shape[0] == 0:
        raise ValueError("no training points")
    return float(np.max(_nu(p, s, u0, X)))


def error_pi(s, reference, test_points):
    """Relative l2 error of ``s`` against ``reference`` on the test points."""
    X = _points(test_points, "test_points")
    ref = np.asarray(reference(X), dtype=float).reshape(-1)
    energy = float(ref @ ref)
    if energy <= 0:
        raise ValueError("reference has zero energy on the test set")
    diff = ref - np.asarray(s(X), dtype=float).reshape(-1)
    return float(np.sqrt(diff @ diff / energy))


def rank_diagnostic(p, centers, rel_tol=1e-10):
    """Numerical rank of ``[f(x_i) | g(x_i)]`` at each center."""
    X = _points(centers, "centers", p.state_dim)
    F = np.asarray(p.f(X), dtype=float)[:, :, None]
    G = np.asarray(p.g(X), dtype=float)
    sv = np.linalg.svd(np.concatenate([F, G], axis=2), compute_uv=False)
    top = sv[:, :1]
    return np.sum(sv > rel_tol * np.where(top > 0, top, 1.0), axis=1)


class _ColumnCache:
    """Cross-Gram columns between all candidate functionals and the selected ones."""

    def __init__(self, n_rows):
        self.data = np.empty((n_rows, 16))
        self.n = 0

    def append(self, col):
        if self.n == self.data.shape[1]:
            grown = np.empty((self.data.shape[0], 2 * self.data.shape[1]))
            grown[:, : self.n] = self.data[:, : self.n]
            self.data = grown
        self.data[:, self.n] = col
        self.n += 1

    def drop_last(self):
        self.n -= 1

    @property
    def view(self):
        return self.data[:, : self.n]


def _candidate_column(k, X, D, j):
    out = np.empty(X.shape[0])
    step = max(1, _COLUMN_BUDGET // max(1, X.shape[1]))
    xj, dj = X[j : j + 1], D[j : j + 1]
    for start in range(0, X.shape[0], step):
        sl = slice(start, start + step)
        out[sl] = k.hessian12_dir(X[sl], D[sl], xj, dj)[:, 0]
    return out


def greedy_select(p, k, u0, gc, jitter="auto"):
    """Residual-driven greedy choice of centers under the fixed policy ``u0``.

    Starting from s = 0, the candidate with the largest relative GHJB residual
    is added (``gc.batch`` at a time, ties to the lowest pool index), the
    interpolant is re-solved, and the largest remaining residual is recorded.
    Candidates where f + g u0 vanishes are skipped permanently.

    Returns
    -------
    centers : (n, N) array
    trace : GreedyTrace
    """
    X = np.asarray(gc.candidate_pool)
    if X.shape[1] != p.state_dim:
        raise ValueError("candidate pool dimension does not match the problem")
    n_pool = X.shape[0]
    U0 = _controls(u0(X), n_pool, p.control_dim)
    D = _directions(p, X, U0)
    c = running_cost(p, X, U0)
    if np.any(c <= 0):
        raise ValueError("h(x) + <u0, R u0> must be positive on the candidate pool")
    degenerate = np.linalg.norm(D, axis=1) < DIRECTION_TOL

    with_origin = _needs_origin(k)
    cache = _ColumnCache(n_pool)
    k00 = None
    if with_origin:
        zero = np.zeros((1, p.state_dim))
        # <d_x, grad_1 k(x, 0)> pairs each candidate with the origin evaluation
        cache.append(k.grad1_dir(X, D, zero)[:, 0])
        k00 = float(k.eval(zero, zero)[0, 0])

    available = np.ones(n_pool, dtype=bool)
    counted = np.ones(n_pool, dtype=bool)
    selected = []
    nu = np.ones(n_pool)
    trace = GreedyTrace()

    def solve():
        sel = np.asarray(selected, dtype=int)
        C = cache.view
        n = sel.size + int(with_origin)
        K = np.empty((n, n))
        if with_origin:
            K[0, 0] = k00
            K[0, 1:] = C[sel, 0]
            K[1:, 0] = C[sel, 0]
        K[int(with_origin) :, int(with_origin) :] = C[sel, int(with_origin) :]
        K = symmetrize_upper(K)
        factor, _ = factor_gram(K, jitter)
        rhs = -c[sel]
        if with_origin:
            rhs = np.concatenate([[0.0], rhs])
        alpha = cho_solve(factor, rhs, check_finite=False)
        return np.abs(C @ alpha + c) / c

    while len(selected) < gc.max_centers:
        picked = 0
        order = np.argsort(-np.where(available, nu, -np.inf), kind="stable")
        for j in order:
            if picked >= gc.batch or len(selected) >= gc.max_centers or not available[j]:
                break
            available[j] = False
            if degenerate[j]:
                counted[j] = False
                trace.skipped.append(int(j))
                logger.info("greedy: skipping candidate %d, f + g u0 vanishes there", j)
                continue
            cache.append(_candidate_column(k, X, D, j))
            selected.append(int(j))
            picked += 1
        if picked == 0:
            logger.info("greedy: candidate pool exhausted after %d centers", len(selected))
            break
        try:
            nu = solve()
        except DegenerateGramError:
            # undo this batch: the new functionals are numerically dependent
            for _ in range(picked):
                j = selected.pop()
                cache.drop_last()
                counted[j] = False
                trace.skipped.append(j)
                logger.info("greedy: skipping candidate %d, Gram became singular", j)
            if not selected:
                nu = np.ones(n_pool)
            continue
        res = float(np.max(nu[counted]))
        trace.n_centers.append(len(selected))
        trace.res_ghjb.append(res)
        logger.debug("greedy: %d centers, Res-GHJB %.3e", len(selected), res)
        if res <= gc.target_residual:
            break
    trace.training_mask = counted
    return X[np.asarray(selected, dtype=int)], trace


def run_rkhs_pi(p, k, u0, gc, pc):
    """Greedy center selection followed by policy iteration on the frozen centers.

    Returns ``(surrogate, history)``.  A well-posedness failure after the
    first iteration raises :class:`PIAbort` carrying the partial history.
    """
    if u0 is None:
        u0 = p.initial_policy
    if u0 is None:
        raise ValueError("no initial policy given and the problem bundles none")
    history = PIHistory()
    centers, trace = greedy_select(p, k, u0, gc, pc.jitter)
    history.greedy = trace
    if centers.shape[0] == 0:
        raise PIAbort("greedy selection produced no centers", history)

    ranks = rank_diagnostic(p, centers)
    low = int(np.sum(ranks < p.control_dim + 1))
    if low:
        logger.info("rank of [f | g] is below M+1 at %d of %d centers", low, centers.shape[0])

    if pc.training_points is not None:
        train = _points(pc.training_points, "training_points", p.state_dim)
    else:
        train = gc.candidate_pool[trace.training_mask]
    ver_pts = centers if pc.verification_points is None else _points(pc.verification_points, "verification_points")
    reference = pc.reference if pc.reference is not None else p.exact_ovf
    test = None if pc.test_points is None else _points(pc.test_points, "test_points", p.state_dim)

    prev = np.zeros(centers.shape[0])
    policy = u0
    s = None
    for eta in range(int(pc.max_pi_iters)):
        U = _controls(policy(centers), centers.shape[0], p.control_dim)
        try:
            rep = policy_evaluation(p, k, centers, U, pc.jitter)
        except (WellPosednessError, DegenerateGramError) as exc:
            raise PIAbort(f"policy evaluation failed at iteration {eta}: {exc}", history, s) from exc
        s = rep.surrogate
        vals = s(centers)
        e_eta = float(np.max(np.abs(vals - prev)))
        prev = vals
        err = None
        if test is not None and reference is not None:
            err = error_pi(s, reference, test)
        ver = verify_inequalities(s, ver_pts, pc.verification_mode)
        if not ver.feasible:
            logger.warning(
                "iteration %d: verification failed (lower %.3e, upper %.3e)",
                eta,
                ver.worst_lower_violation,
                ver.worst_upper_violation,
            )
        history.records.append(
            PIRecord(
                iter=eta,
                e_eta=e_eta,
                res_ghjb=res_ghjb(p, s, u0, train),
                error_pi=err,
                verification=ver,
                n_centers=centers.shape[0],
                rkhs_norm=rep.rkhs_norm,
                jitter_used=rep.regularization_used,
            )
        )
        logger.info("PI iteration %d: e = %.3e", eta, e_eta)
        if e_eta <= pc.epsilon:
            history.converged = True
            break
        policy = policy_improvement(p, s)
    else:
        history.max_iters_hit = True
        logger.warning("policy iteration stopped at max_pi_iters=%d without reaching epsilon", pc.max_pi_iters)
    return s, history
