"""Kernel families with closed-form first- and mixed second-derivative evaluators.

All evaluators are vectorized over point sets.  Inputs are either single points
of shape ``(N,)`` or point sets of shape ``(n, N)``; a 1-D argument drops the
corresponding axis of the result, so ``k.eval(x, y)`` with two points returns a
float and ``k.hessian12(x, y)`` an ``(N, N)`` matrix.

The directional helpers (``grad1_dir``, ``hessian12_dir``, ``hessian12_T_dir``)
contract the derivative tensors against per-point direction vectors without
materializing the ``(n, m, N, N)`` Hessian stack, which is what Gram assembly
and surrogate gradients use.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Kernel",
    "GaussianKernel",
    "LinearMaternKernel",
    "QuadraticProductKernel",
    "KERNEL_NAMES",
    "make_kernel",
]

# below this distance the Matern profile uses its analytic r -> 0 limit
_MATERN_R0 = 1e-12


def _as_points(x, name):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr2 = arr[None, :]
    elif arr.ndim == 2:
        arr2 = arr
    else:
        raise ValueError(f"{name} must be a point (N,) or a point set (n, N), got shape {arr.shape}")
    if arr2.shape[1] < 1:
        raise ValueError(f"{name} has zero dimension")
    if not np.all(np.isfinite(arr2)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr2, arr.ndim == 1


def _check_dims(*arrays):
    dims = {a.shape[1] for a in arrays}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch between point sets: {sorted(dims)}")


def _squeeze(out, x_single, y_single):
    if y_single:
        out = out[:, 0]
    if x_single:
        out = out[0]
    if np.ndim(out) == 0:
        return float(out)
    return out


class Kernel:
    """Base class: a symmetric positive-definite kernel on R^N."""

    name = "kernel"
    gamma: float

    # -- pointwise-pair evaluators ---------------------------------------------
    def eval(self, x, y):
        """Kernel values k(x_i, y_j)."""
        X, xs = _as_points(x, "x")
        Y, ys = _as_points(y, "y")
        _check_dims(X, Y)
        return _squeeze(self._eval(X, Y), xs, ys)

    __call__ = eval

    def grad1(self, x, y):
        """Gradient of k in its first argument, shape ``(n, m, N)``."""
        X, xs = _as_points(x, "x")
        Y, ys = _as_points(y, "y")
        _check_dims(X, Y)
        return _squeeze(self._grad1(X, Y), xs, ys)

    def grad2(self, x, y):
        """Gradient of k in its second argument, shape ``(n, m, N)``."""
        X, xs = _as_points(x, "x")
        Y, ys = _as_points(y, "y")
        _check_dims(X, Y)
        return _squeeze(self._grad1(Y, X).transpose(1, 0, 2), xs, ys)

    def hessian12(self, x, y):
        """Mixed Hessian E[k, l] = d^2 k / dx_k dy_l, shape ``(n, m, N, N)``."""
        X, xs = _as_points(x, "x")
        Y, ys = _as_points(y, "y")
        _check_dims(X, Y)
        return _squeeze(self._hessian12(X, Y), xs, ys)

    # -- directional contractions -------------------------------------------
    def grad1_dir(self, X, A, Y):
        """``<a_i, grad_1 k(x_i, y_j)>`` as an ``(n, m)`` array."""
        X, A, Y = self._prep_dir(X, A, Y)
        return self._grad1_dir(X, A, Y)

    def hessian12_dir(self, X, A, Y, B):
        """``<a_i, E(x_i, y_j) b_j>`` as an ``(n, m)`` array."""
        X, A, Y = self._prep_dir(X, A, Y)
        B = np.atleast_2d(np.asarray(B, dtype=float))
        if B.shape != Y.shape:
            raise ValueError("B must have the same shape as Y")
        return self._hessian12_dir(X, A, Y, B)

    def hessian12_T_dir(self, X, A, Y):
        """``E(x_i, y_j)^T a_i``, the y-gradient of the representer of a directional
        derivative functional, as an ``(n, m, N)`` array."""
        X, A, Y = self._prep_dir(X, A, Y)
        return self._hessian12_T_dir(X, A, Y)

    # -- weighted sums over the first argument --------------------------------
    def grad2_sum(self, X, w, Y):
        """``sum_i w_i grad_2 k(x_i, y_j)`` as an ``(m, N)`` array."""
        X, _ = _as_points(X, "X")
        Y, _ = _as_points(Y, "Y")
        _check_dims(X, Y)
        return self._grad2_sum(X, np.asarray(w, dtype=float).reshape(-1), Y)

    def hessian12_T_dir_sum(self, X, A, w, Y):
        """``sum_i w_i E(x_i, y_j)^T a_i`` as an ``(m, N)`` array."""
        X, A, Y = self._prep_dir(X, A, Y)
        return self._hessian12_T_dir_sum(X, A, np.asarray(w, dtype=float).reshape(-1), Y)

    def _grad2_sum(self, X, w, Y):
        return np.einsum("i,jik->jk", w, self._grad1(Y, X))

    def _hessian12_T_dir_sum(self, X, A, w, Y):
        return np.einsum("i,ijk->jk", w, self._hessian12_T_dir(X, A, Y))

    @staticmethod
    def _prep_dir(X, A, Y):
        X, _ = _as_points(X, "X")
        Y, _ = _as_points(Y, "Y")
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape != X.shape:
            raise ValueError("direction array must have the same shape as X")
        _check_dims(X, Y)
        return X, A, Y

    def params(self):
        return {"name": self.name, "gamma": self.gamma}


class _RadialKernel(Kernel):
    """k(x, y) = phi(||x - y||).

    Subclasses provide ``_profile(r)`` returning ``(phi, a, c)`` with
    ``a = phi'(r)/r`` and ``c = a'(r)/r``, so that
    grad_1 k = a d and E = -a I - c d d^T with d = x - y.
    """

    def _terms(self, X, Y):
        D = X[:, None, :] - Y[None, :, :]
        r = np.sqrt(np.einsum("ijk,ijk->ij", D, D))
        phi, a, c = self._profile(r)
        return D, phi, a, c

    def _eval(self, X, Y):
        return self._terms(X, Y)[1]

    def _grad1(self, X, Y):
        D, _, a, _ = self._terms(X, Y)
        return a[..., None] * D

    def _hessian12(self, X, Y):
        D, _, a, c = self._terms(X, Y)
        N = X.shape[1]
        H = -a[..., None, None] * np.eye(N)
        H -= c[..., None, None] * D[..., :, None] * D[..., None, :]
        return H

    def _grad1_dir(self, X, A, Y):
        D, _, a, _ = self._terms(X, Y)
        return a * np.einsum("ik,ijk->ij", A, D)

    def _hessian12_dir(self, X, A, Y, B):
        D, _, a, c = self._terms(X, Y)
        ad = np.einsum("ik,ijk->ij", A, D)
        db = np.einsum("ijk,jk->ij", D, B)
        return -a * (A @ B.T) - c * ad * db

    def _hessian12_T_dir(self, X, A, Y):
        D, _, a, c = self._terms(X, Y)
        ad = np.einsum("ik,ijk->ij", A, D)
        return -a[..., None] * A[:, None, :] - (c * ad)[..., None] * D

    # sum_i W_ij d_ij with d_ij = x_i - y_j, without forming W[..., None] * D
    @staticmethod
    def _weighted_diff(W, X, Y):
        return W.T @ X - W.sum(axis=0)[:, None] * Y

    def _grad2_sum(self, X, w, Y):
        _, _, a, _ = self._terms(X, Y)
        return -self._weighted_diff(w[:, None] * a, X, Y)

    def _hessian12_T_dir_sum(self, X, A, w, Y):
        D, _, a, c = self._terms(X, Y)
        ad = np.einsum("ik,ijk->ij", A, D)
        return -(w[:, None] * a).T @ A - self._weighted_diff(w[:, None] * c * ad, X, Y)


@dataclass(frozen=True)
class GaussianKernel(_RadialKernel):
    """exp(-(gamma ||x - y||)^2)."""

    gamma: float
    name = "gaussian"

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def _profile(self, r):
        g2 = self.gamma**2
        phi = np.exp(-g2 * r**2)
        return phi, -2.0 * g2 * phi, 4.0 * g2**2 * phi


@dataclass(frozen=True)
class LinearMaternKernel(_RadialKernel):
    """exp(-gamma ||x - y||) (1 + gamma ||x - y||), the Matern-3/2 kernel."""

    gamma: float
    name = "linear-matern"

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def _profile(self, r):
        g = self.gamma
        e = np.exp(-g * r)
        phi = e * (1.0 + g * r)
        a = -(g**2) * e
        # c multiplies d d^T, which vanishes faster than 1/r grows
        safe_r = np.where(r < _MATERN_R0, 1.0, r)
        c = np.where(r < _MATERN_R0, 0.0, g**3 * e / safe_r)
        return phi, a, c


@dataclass(frozen=True)
class QuadraticProductKernel(Kernel):
    """<x, y>^2 * base(x, y).

    Every member of the induced RKHS vanishes together with its gradient at the
    origin.  Both properties hold structurally: each evaluator carries a factor
    of <x, y> or of y itself, so zero inputs give exact zeros.
    """

    base: _RadialKernel

    def __post_init__(self):
        if not isinstance(self.base, _RadialKernel):
            raise TypeError("QuadraticProductKernel needs a radial base kernel")

    @property
    def gamma(self):
        return self.base.gamma

    @property
    def name(self):
        return self.base.name + "-quad"

    def _parts(self, X, Y):
        D, phi, a, c = self.base._terms(X, Y)
        return D, X @ Y.T, phi, a, c

    def _eval(self, X, Y):
        _, p, phi, _, _ = self._parts(X, Y)
        return p**2 * phi

    def _grad1(self, X, Y):
        D, p, phi, a, _ = self._parts(X, Y)
        return (2.0 * p * phi)[..., None] * Y[None, :, :] + (p**2 * a)[..., None] * D

    def _hessian12(self, X, Y):
        D, p, phi, a, c = self._parts(X, Y)
        N = X.shape[1]
        Yk = np.broadcast_to(Y[None, :, :, None], D.shape + (1,))
        Xl = np.broadcast_to(X[:, None, None, :], D.shape[:2] + (1, N))
        Dk = D[..., :, None]
        Dl = D[..., None, :]
        eye = np.eye(N)
        H = 2.0 * phi[..., None, None] * Yk * Xl
        H -= (2.0 * p * a)[..., None, None] * Yk * Dl
        H += (2.0 * p * phi)[..., None, None] * eye
        H += (2.0 * p * a)[..., None, None] * Dk * Xl
        H -= (p**2 * a)[..., None, None] * eye
        H -= (p**2 * c)[..., None, None] * Dk * Dl
        return H

    def _grad1_dir(self, X, A, Y):
        D, p, phi, a, _ = self._parts(X, Y)
        ay = A @ Y.T
        ad = np.einsum("ik,ijk->ij", A, D)
        return 2.0 * p * phi * ay + p**2 * a * ad

    def _hessian12_dir(self, X, A, Y, B):
        D, p, phi, a, c = self._parts(X, Y)
        ay = A @ Y.T
        xb = X @ B.T
        ab = A @ B.T
        ad = np.einsum("ik,ijk->ij", A, D)
        db = np.einsum("ijk,jk->ij", D, B)
        return (
            2.0 * phi * ay * xb
            - 2.0 * p * a * ay * db
            + 2.0 * p * phi * ab
            + 2.0 * p * a * ad * xb
            - p**2 * a * ab
            - p**2 * c * ad * db
        )

    def _hessian12_T_dir(self, X, A, Y):
        D, p, phi, a, c = self._parts(X, Y)
        ay = A @ Y.T
        ad = np.einsum("ik,ijk->ij", A, D)
        Xb = X[:, None, :]
        Ab = A[:, None, :]
        return (
            (2.0 * phi * ay + 2.0 * p * a * ad)[..., None] * Xb
            - (2.0 * p * a * ay + p**2 * c * ad)[..., None] * D
            + (2.0 * p * phi - p**2 * a)[..., None] * Ab
        )

    def params(self):
        return {"name": self.name, "gamma": self.gamma}


KERNEL_NAMES = ("gaussian", "linear-matern", "gaussian-quad", "linear-matern-quad")


def make_kernel(name, gamma=None, gamma_squared=None):
    """Build a kernel from its CLI name and either ``gamma`` or ``gamma_squared``."""
    if (gamma is None) == (gamma_squared is None):
        raise ValueError("give exactly one of gamma and gamma_squared")
    if gamma is None:
        if gamma_squared <= 0:
            raise ValueError(f"gamma_squared must be positive, got {gamma_squared}")
        gamma = float(np.sqrt(gamma_squared))
    gamma = float(gamma)
    if name == "gaussian":
        return GaussianKernel(gamma)
    if name == "linear-matern":
        return LinearMaternKernel(gamma)
    if name == "gaussian-quad":
        return QuadraticProductKernel(GaussianKernel(gamma))
    if name == "linear-matern-quad":
        return QuadraticProductKernel(LinearMaternKernel(gamma))
    raise ValueError(f"unknown kernel {name!r}; valid options: {', '.join(KERNEL_NAMES)}")
