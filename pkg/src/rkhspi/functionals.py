"""Point-evaluation and directional-gradient functionals, their Riesz
representers, and generalized Gram matrices.

A :class:`FunctionalSet` stores its entries column-wise (points, directions and
a gradient flag) so Gram blocks can be assembled with the vectorized kernel
contractions.  The representer of ``PointEval(x)`` is ``k(x, .)`` and that of
``DirGrad(x, a)`` is ``<a, grad_1 k(x, .)>``.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PointEval",
    "DirGrad",
    "FunctionalSet",
    "representer_value",
    "representer_gradient",
    "cross_gram",
    "gram",
]

# cap on the number of (row, column, coordinate) entries held per Gram block
_BLOCK_BUDGET = 4_000_000


@dataclass(frozen=True)
class PointEval:
    x: tuple

    def __init__(self, x):
        object.__setattr__(self, "x", tuple(float(v) for v in np.ravel(x)))


@dataclass(frozen=True)
class DirGrad:
    x: tuple
    a: tuple

    def __init__(self, x, a):
        x = tuple(float(v) for v in np.ravel(x))
        a = tuple(float(v) for v in np.ravel(a))
        if len(a) != len(x):
            raise ValueError("direction and point dimensions differ")
        if not np.any(np.asarray(a)):
            raise ValueError("DirGrad direction must be nonzero")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "a", a)


class FunctionalSet:
    """Ordered, duplicate-free collection of functionals.

    Parameters
    ----------
    points : array (n, N)
    directions : array (n, N)
        Rows belonging to point evaluations are ignored and stored as zeros.
    is_grad : bool array (n,)
    """

    def __init__(self, points, directions, is_grad):
        points = np.array(points, dtype=float, ndmin=2)
        directions = np.array(directions, dtype=float, ndmin=2)
        is_grad = np.asarray(is_grad, dtype=bool).reshape(-1)
        n = is_grad.shape[0]
        if n == 0:
            points = points.reshape(0, points.shape[-1] if points.size else 0)
            directions = directions.reshape(points.shape)
        if points.shape != directions.shape or points.shape[0] != n:
            raise ValueError("points, directions and is_grad disagree in length or dimension")
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(directions))):
            raise ValueError("functional data must be finite")
        directions = np.where(is_grad[:, None], directions, 0.0)
        if np.any(is_grad & ~np.any(directions != 0.0, axis=1)):
            raise ValueError("DirGrad direction must be nonzero")
        keys = {
            (bool(g), p.tobytes(), d.tobytes()) for g, p, d in zip(is_grad, points, directions)
        }
        if len(keys) != n:
            raise ValueError("FunctionalSet contains duplicate functionals")
        self.points = points
        self.directions = directions
        self.is_grad = is_grad
        for arr in (self.points, self.directions, self.is_grad):
            arr.setflags(write=False)

    @classmethod
    def from_list(cls, entries):
        entries = list(entries)
        if not entries:
            raise ValueError("empty functional list; use FunctionalSet.empty(N)")
        pts = [e.x for e in entries]
        dirs = [e.a if isinstance(e, DirGrad) else (0.0,) * len(e.x) for e in entries]
        grads = [isinstance(e, DirGrad) for e in entries]
        return cls(pts, dirs, grads)

    @classmethod
    def empty(cls, dim):
        return cls(np.zeros((0, dim)), np.zeros((0, dim)), np.zeros(0, dtype=bool))

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.is_grad.shape[0]

    def __getitem__(self, i):
        if self.is_grad[i]:
            return DirGrad(self.points[i], self.directions[i])
        return PointEval(self.points[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __repr__(self):
        return f"FunctionalSet(n={len(self)}, n_grad={int(self.is_grad.sum())}, dim={self.dim})"

    def subset(self, indices):
        idx = np.asarray(indices, dtype=int)
        return FunctionalSet(self.points[idx], self.directions[idx], self.is_grad[idx])


def _split(fs):
    p = np.flatnonzero(~fs.is_grad)
    g = np.flatnonzero(fs.is_grad)
    return p, g


def _as_eval_points(y, dim):
    Y = np.asarray(y, dtype=float)
    single = Y.ndim == 1
    Y = np.atleast_2d(Y)
    if Y.shape[1] != dim:
        raise ValueError(f"dimension mismatch: functional in R^{dim}, point in R^{Y.shape[1]}")
    return Y, single


def representer_value(lam, k, y):
    """Value of the Riesz representer of ``lam`` at ``y`` (point or point set)."""
    x = np.asarray(lam.x)[None, :]
    Y, single = _as_eval_points(y, x.shape[1])
    if isinstance(lam, DirGrad):
        out = k.grad1_dir(x, np.asarray(lam.a)[None, :], Y)[0]
    else:
        out = k.eval(x, Y)[0]
    return float(out[0]) if single else out


def representer_gradient(lam, k, y):
    """Gradient in ``y`` of the Riesz representer of ``lam``."""
    x = np.asarray(lam.x)[None, :]
    Y, single = _as_eval_points(y, x.shape[1])
    if isinstance(lam, DirGrad):
        out = k.hessian12_T_dir(x, np.asarray(lam.a)[None, :], Y)[0]
    else:
        out = k.grad2(x, Y)[0]
    return out[0] if single else out


def _row_chunks(n_rows, n_cols, dim):
    step = max(1, _BLOCK_BUDGET // max(1, n_cols * dim))
    for start in range(0, n_rows, step):
        yield slice(start, min(n_rows, start + step))


def cross_gram(fs1, fs2, k):
    """Matrix of RKHS inner products <w_i, w_j> between representers of two sets."""
    if fs1.dim != fs2.dim:
        raise ValueError("functional sets live in different dimensions")
    out = np.empty((len(fs1), len(fs2)))
    p1, g1 = _split(fs1)
    p2, g2 = _split(fs2)
    X1, A1 = fs1.points, fs1.directions
    X2, A2 = fs2.points, fs2.directions
    dim = fs1.dim
    if p1.size and p2.size:
        for sl in _row_chunks(p1.size, p2.size, dim):
            rows = p1[sl]
            out[np.ix_(rows, p2)] = k.eval(X1[rows], X2[p2])
    if g1.size and p2.size:
        for sl in _row_chunks(g1.size, p2.size, dim):
            rows = g1[sl]
            out[np.ix_(rows, p2)] = k.grad1_dir(X1[rows], A1[rows], X2[p2])
    if p1.size and g2.size:
        for sl in _row_chunks(p1.size, g2.size, dim):
            rows = p1[sl]
            out[np.ix_(rows, g2)] = k.grad1_dir(X2[g2], A2[g2], X1[rows]).T
    if g1.size and g2.size:
        for sl in _row_chunks(g1.size, g2.size, dim):
            rows = g1[sl]
            out[np.ix_(rows, g2)] = k.hessian12_dir(X1[rows], A1[rows], X2[g2], A2[g2])
    return out


def symmetrize_upper(K):
    """Mirror the upper triangle of ``K`` so the result is bit-exactly symmetric."""
    upper = np.triu(K)
    return upper + np.triu(K, 1).T


def gram(fs, k):
    """Generalized Gram matrix of ``fs``, exactly symmetric by construction."""
    return symmetrize_upper(cross_gram(fs, fs, k))
