"""Linear optimal recovery (generalized minimal-norm interpolation).

The interpolant is ``s = sum_j alpha_j w_j`` where ``w_j`` are the Riesz
representers of the functionals and ``alpha`` solves ``K alpha = r`` with the
generalized Gram matrix ``K``.  Surrogate values and gradients are evaluated
directly from the representers, not from Gram rows, so the two routes can be
checked against each other.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .exceptions import DegenerateGramError
from .functionals import FunctionalSet, gram

__all__ = [
    "Surrogate",
    "RecoveryReport",
    "JITTER_LADDER",
    "factor_gram",
    "solve_linear_recovery",
    "surrogate_eval",
    "surrogate_grad",
    "rkhs_norm",
    "apply_functionals",
    "finite_dim_objective",
]

logger = logging.getLogger(__name__)

# relative jitter levels, scaled by trace(K)/n; tried in order after jitter = 0
JITTER_LADDER = (1e-13, 1e-11, 1e-9)

# cap on evaluation points per chunk, and on (functional, point, coordinate) entries
_EVAL_CHUNK = 2048
_EVAL_BUDGET = 4_000_000


def _chunk(s):
    width = max(1, len(s.functionals) * s.dim)
    return max(1, min(_EVAL_CHUNK, _EVAL_BUDGET // width))


@dataclass(frozen=True)
class Surrogate:
    """Kernel expansion over the representers of ``functionals``."""

    kernel: object
    functionals: FunctionalSet
    coefficients: np.ndarray
    _gram: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if coef.shape[0] != len(self.functionals):
            raise ValueError("coefficient and functional counts differ")
        coef = coef.copy()
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)

    @classmethod
    def zero(cls, kernel, dim):
        return cls(kernel, FunctionalSet.empty(dim), np.zeros(0))

    @property
    def dim(self):
        return self.functionals.dim

    def __call__(self, x):
        return surrogate_eval(self, x)

    def gradient(self, x):
        return surrogate_grad(self, x)

    def gram(self):
        if self._gram is None:
            object.__setattr__(self, "_gram", gram(self.functionals, self.kernel))
        return self._gram


@dataclass(frozen=True)
class RecoveryReport:
    surrogate: Surrogate
    max_constraint_violation: float
    rkhs_norm: float
    regularization_used: float


def factor_gram(K, jitter="auto"):
    """Cholesky-factorize a Gram matrix.

    ``jitter="auto"`` tries no regularization first and then walks
    :data:`JITTER_LADDER` (relative to ``trace(K)/n``).  A float is used as an
    absolute diagonal shift with no escalation.

    Returns
    -------
    (factor, jitter_used)
        ``factor`` is a :func:`scipy.linalg.cho_factor` pair.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    if n == 0:
        return (np.zeros((0, 0)), False), 0.0
    if jitter == "auto":
        scale = np.trace(K) / n
        levels = [0.0] + [lvl * scale for lvl in JITTER_LADDER]
    else:
        jitter = float(jitter)
        if jitter < 0:
            raise ValueError("jitter must be nonnegative")
        levels = [jitter]
    for level in levels:
        try:
            factor = cho_factor(K + level * np.eye(n), lower=True, check_finite=True)
        except (LinAlgError, ValueError):
            continue
        if level > 0:
            logger.debug("Gram factorized with jitter %.3e (n=%d)", level, n)
        return factor, level
    raise DegenerateGramError(
        f"Gram matrix of size {n} is not positive definite even with jitter {levels[-1]:.3e}; "
        "the functionals are (numerically) linearly dependent"
    )


def _cho_solve(factor, r):
    if len(r) == 0:
        return np.zeros(0)
    return cho_solve(factor, r, check_finite=False)


def solve_linear_recovery(fs, targets, k, jitter="auto"):
    """Minimal-norm interpolant of ``lambda_i(s) = targets[i]``.

    Returns a :class:`RecoveryReport` whose constraint violation is recomputed
    by evaluating the surrogate directly.
    """
    r = np.asarray(targets, dtype=float).reshape(-1)
    if r.shape[0] != len(fs):
        raise ValueError(f"{len(fs)} functionals but {r.shape[0]} targets")
    if not np.all(np.isfinite(r)):
        raise ValueError("targets contain NaN or inf")
    K = gram(fs, k)
    factor, used = factor_gram(K, jitter)
    alpha = _cho_solve(factor, r)
    s = Surrogate(k, fs, alpha, _gram=K)
    viol = np.abs(apply_functionals(s, fs) - r)
    return RecoveryReport(
        surrogate=s,
        max_constraint_violation=float(viol.max()) if viol.size else 0.0,
        rkhs_norm=rkhs_norm(s),
        regularization_used=float(used),
    )


def _eval_points(s, x):
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != s.dim:
        raise ValueError(f"dimension mismatch: surrogate in R^{s.dim}, points in R^{X.shape[1]}")
    return X, single


def surrogate_eval(s, x):
    """s(x) for a point ``(N,)`` or point set ``(n, N)``."""
    X, single = _eval_points(s, x)
    out = np.zeros(X.shape[0])
    fs, alpha = s.functionals, s.coefficients
    p = np.flatnonzero(~fs.is_grad)
    g = np.flatnonzero(fs.is_grad)
    k = s.kernel
    step = _chunk(s)
    for start in range(0, X.shape[0], step):
        Y = X[start : start + step]
        acc = np.zeros(Y.shape[0])
        if p.size:
            acc += alpha[p] @ k.eval(fs.points[p], Y)
        if g.size:
            acc += alpha[g] @ k.grad1_dir(fs.points[g], fs.directions[g], Y)
        out[start : start + Y.shape[0]] = acc
    return float(out[0]) if single else out


def surrogate_grad(s, x):
    """Gradient of the surrogate at a point or point set."""
    X, single = _eval_points(s, x)
    out = np.zeros(X.shape)
    fs, alpha = s.functionals, s.coefficients
    p = np.flatnonzero(~fs.is_grad)
    g = np.flatnonzero(fs.is_grad)
    k = s.kernel
    step = _chunk(s)
    for start in range(0, X.shape[0], step):
        Y = X[start : start + step]
        acc = np.zeros(Y.shape)
        if p.size:
            acc += k.grad2_sum(fs.points[p], alpha[p], Y)
        if g.size:
            acc += k.hessian12_T_dir_sum(fs.points[g], fs.directions[g], alpha[g], Y)
        out[start : start + Y.shape[0]] = acc
    return out[0] if single else out


def apply_functionals(s, fs):
    """lambda_i(s) for every functional in ``fs``, by direct evaluation of s."""
    out = np.empty(len(fs))
    p = np.flatnonzero(~fs.is_grad)
    g = np.flatnonzero(fs.is_grad)
    if p.size:
        out[p] = surrogate_eval(s, fs.points[p])
    if g.size:
        grads = surrogate_grad(s, fs.points[g])
        out[g] = np.einsum("ik,ik->i", grads, fs.directions[g])
    return out


def rkhs_norm(s):
    """sqrt(alpha^T K alpha)."""
    if len(s.coefficients) == 0:
        return 0.0
    val = float(s.coefficients @ s.gram() @ s.coefficients)
    return float(np.sqrt(max(val, 0.0)))


def finite_dim_objective(z, fs, k):
    """z^T K^{-1} z for the Gram matrix of ``fs``; no regularization."""
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape[0] != len(fs):
        raise ValueError("z and functional set lengths differ")
    factor, _ = factor_gram(gram(fs, k), jitter=0.0)
    return float(z @ _cho_solve(factor, z))
