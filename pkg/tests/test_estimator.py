import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rkhspi import RKHSPolicyIteration
from rkhspi.kernels import make_kernel
from rkhspi.problems import grid_2d, sample_box, toy_problem


@pytest.fixture(scope="module")
def fitted():
    est = RKHSPolicyIteration(toy_problem(), kernel="gaussian", gamma=np.sqrt(1.7), max_centers=120, epsilon=1e-6)
    return est.fit(grid_2d(-1.0, 1.0, 40))


def test_params_and_clone():
    est = RKHSPolicyIteration(toy_problem(), gamma=2.0, max_centers=7)
    params = est.get_params()
    assert params["gamma"] == 2.0 and params["max_centers"] == 7
    twin = clone(est)
    assert twin.get_params()["max_centers"] == 7 and twin is not est
    assert est.set_params(batch=3).batch == 3


def test_fit_attributes(fitted):
    assert fitted.n_features_in_ == 2
    assert fitted.centers_.shape == (120, 2)
    assert fitted.history_.converged
    assert len(fitted.greedy_trace_) == 120


def test_predict_and_score(fitted):
    X = sample_box(fitted.problem.domain, 50, 11)
    v = fitted.predict(X)
    assert v.shape == (50,)
    assert fitted.gradient(X).shape == (50, 2)
    assert fitted.feedback(X).shape == (50, 1)
    score = fitted.score(X)
    assert -1e-3 < score <= 0
    assert fitted.score(X, fitted.problem.exact_ovf(X)) == score


def test_validation(fitted):
    with pytest.raises(ValueError):
        fitted.predict(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        fitted.score(np.ones((3, 2)), [1.0, 2.0])
    with pytest.raises(NotFittedError):
        RKHSPolicyIteration(toy_problem()).predict(np.ones((1, 2)))
    with pytest.raises(ValueError):
        RKHSPolicyIteration().fit(np.ones((3, 2)))
    with pytest.raises(ValueError):
        RKHSPolicyIteration(toy_problem()).fit(np.ones((3, 3)))


def test_kernel_instance_accepted():
    k = make_kernel("gaussian-quad", gamma_squared=1.7)
    est = RKHSPolicyIteration(toy_problem(), kernel=k, max_centers=10, max_iter=1).fit(grid_2d(-1, 1, 10))
    assert est.surrogate_.kernel is k
    assert est.predict(np.zeros((1, 2)))[0] == 0.0
