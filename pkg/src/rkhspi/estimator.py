"""scikit-learn style wrapper around greedy selection plus RKHS policy iteration."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .kernels import Kernel, make_kernel
from .ocp import Psd, feedback
from .rkhs_pi import GreedyConfig, PIConfig, error_pi, run_rkhs_pi

__all__ = ["RKHSPolicyIteration"]


class RKHSPolicyIteration(BaseEstimator):
    """Approximate the optimal value function of ``problem``.

    ``fit(X)`` treats ``X`` as the candidate pool for greedy center
    selection; ``predict(X)`` returns surrogate values.  ``kernel`` is a
    :class:`~rkhspi.kernels.Kernel` or a kernel name, in which case ``gamma``
    is its shape parameter.

    Attributes set by ``fit``: ``centers_``, ``surrogate_``, ``history_``,
    ``greedy_trace_``, ``n_features_in_``.
    """

    def __init__(
        self,
        problem=None,
        kernel="gaussian",
        gamma=1.0,
        initial_policy=None,
        max_centers=200,
        target_residual=0.0,
        batch=1,
        epsilon=1e-7,
        max_iter=10,
        verification=None,
        jitter="auto",
    ):
        self.problem = problem
        self.kernel = kernel
        self.gamma = gamma
        self.initial_policy = initial_policy
        self.max_centers = max_centers
        self.target_residual = target_residual
        self.batch = batch
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.verification = verification
        self.jitter = jitter

    def _kernel(self):
        if isinstance(self.kernel, Kernel):
            return self.kernel
        return make_kernel(self.kernel, gamma=self.gamma)

    def _validate(self, X, reset):
        X = check_array(X, dtype=np.float64, ensure_min_samples=1)
        if reset:
            if self.problem is None:
                raise ValueError("an estimator needs a ControlProblem before fitting")
            if X.shape[1] != self.problem.state_dim:
                raise ValueError(f"X has {X.shape[1]} features, the problem has {self.problem.state_dim} states")
            self.n_features_in_ = X.shape[1]
        elif X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def fit(self, X, y=None):
        X = self._validate(X, reset=True)
        gc = GreedyConfig(X, self.max_centers, self.target_residual, self.batch)
        pc = PIConfig(
            epsilon=self.epsilon,
            max_pi_iters=self.max_iter,
            verification_mode=Psd() if self.verification is None else self.verification,
            jitter=self.jitter,
        )
        s, history = run_rkhs_pi(self.problem, self._kernel(), self.initial_policy, gc, pc)
        self.surrogate_ = s
        self.history_ = history
        self.greedy_trace_ = history.greedy
        self.centers_ = s.functionals.points[s.functionals.is_grad].copy()
        return self

    def predict(self, X):
        check_is_fitted(self, "surrogate_")
        return self.surrogate_(self._validate(X, reset=False))

    def gradient(self, X):
        check_is_fitted(self, "surrogate_")
        return self.surrogate_.gradient(self._validate(X, reset=False))

    def feedback(self, X):
        """Improved policy -1/2 R^{-1} g^T grad s at the rows of X."""
        X = np.atleast_2d(X)
        return feedback(self.problem, self.gradient(X), X)

    def score(self, X, y=None):
        """Negative relative l2 error against ``y`` or the exact value function."""
        check_is_fitted(self, "surrogate_")
        X = self._validate(X, reset=False)
        if y is None:
            if self.problem.exact_ovf is None:
                raise ValueError("no reference values: pass y or use a problem with a known value function")
            reference = self.problem.exact_ovf
        else:
            y = np.asarray(y, dtype=float).reshape(-1)
            if y.shape[0] != X.shape[0]:
                raise ValueError("X and y lengths differ")
            reference = _Lookup(X, y)
        return -error_pi(self.surrogate_, reference, X)


class _Lookup:
    """Reference values given only at the scoring points."""

    def __init__(self, X, y):
        self.X, self.y = X, y

    def __call__(self, Z):
        if Z.shape != self.X.shape or not np.array_equal(Z, self.X):
            raise ValueError("reference values are only known at the scoring points")
        return self.y
