import numpy as np
import pytest

from rkhspi.care import linearize
from rkhspi.functionals import FunctionalSet, PointEval
from rkhspi.kernels import GaussianKernel
from rkhspi.ocp import feedback, hjb_residual, rollout_costs
from rkhspi.problems import (
    ACTUATOR_SUPPORTS,
    PROBLEM_NAMES,
    _heat_kernel,
    grid_2d,
    heat_linear,
    heat_nonlinear,
    kansa_discretize,
    make_problem,
    sample_box,
    toy_problem,
    vdp_problem,
)
from rkhspi.recovery import Surrogate


def test_toy_values():
    p = toy_problem()
    assert p.exact_ovf(np.array([1.0, 1.0])) == 1.5
    assert p.exact_ovf(np.zeros(2)) == 0.0
    X = sample_box(p.domain, 100, 4)
    grad = np.column_stack([X[:, 0], 2 * X[:, 1]])
    assert np.max(np.abs(hjb_residual(p, (None, grad), X))) < 1e-12


def test_toy_policies():
    x = np.array([[0.3, 0.2]])
    assert toy_problem("sin-product").initial_policy(x)[0, 0] == pytest.approx(-1.5 * np.sin(0.3) * 0.5)
    assert toy_problem("sin-sum").initial_policy(x)[0, 0] == pytest.approx(-1.5 * np.sin(0.5))
    with pytest.raises(ValueError):
        toy_problem("lqr")


def test_sin_sum_policy_has_interior_equilibrium():
    # closed loop under -3/2 sin(x1 + x2) rests at (c, c) with c = -0.3478
    p = toy_problem("sin-sum")
    c = -0.34776
    x = np.array([c, c])
    drift = p.f(x) + p.g(x)[:, 0] * p.initial_policy(x)[0]
    assert np.linalg.norm(drift) < 1e-4


def test_vdp():
    p = vdp_problem()
    assert np.all(p.f(np.zeros(2)) == 0)
    assert np.all(p.initial_policy(np.zeros(2)) == 0)
    np.testing.assert_allclose(linearize(p).A, [[0, 1], [-1, 1]], atol=1e-9)


def test_heat_kernel_dirichlet():
    xi = np.linspace(0.05, 0.95, 7)
    assert np.all(_heat_kernel(xi, 0.0) == 0) and np.all(_heat_kernel(xi, 1.0) == 0)


@pytest.mark.parametrize("n", [10, 50])
def test_kansa_discretization(n):
    d = kansa_discretize(n)
    assert np.array_equal(d.K, d.K.T)
    assert np.linalg.eigvalsh(d.K).min() > 0
    assert np.linalg.norm(d.K @ d.A - d.K_lap) < 1e-8 * np.linalg.norm(d.K_lap)
    assert np.max(np.linalg.eigvals(d.A).real) < 0
    # finite-difference Laplacian of the basis function centered at node i, taken at node l
    h = 1e-4
    xl = d.xi[:, None]
    fd = (_heat_kernel(xl + h, d.xi[None, :]) - 2 * _heat_kernel(xl, d.xi[None, :]) + _heat_kernel(xl - h, d.xi[None, :])) / h**2
    np.testing.assert_allclose(d.K_lap, fd, rtol=1e-5, atol=1e-5 * np.abs(d.K_lap).max())
    for j, (lo, hi) in enumerate(ACTUATOR_SUPPORTS):
        np.testing.assert_array_equal(d.b[:, j], (d.xi >= lo) & (d.xi <= hi))
    again = kansa_discretize(n)
    assert np.array_equal(again.K, d.K) and np.array_equal(again.A, d.A)


def test_kansa_rejects_tiny():
    with pytest.raises(ValueError):
        kansa_discretize(1)


def test_heat_linear_value_solves_hjb():
    p = heat_linear(10)
    P = p.metadata["P"]
    assert p.exact_ovf(np.zeros(10)) == 0
    X = sample_box(p.domain, 100, 5)
    res = hjb_residual(p, (None, 2 * X @ P), X)
    assert np.all(np.abs(res) < 1e-8 * (1 + p.h(X)))
    assert np.all(p.initial_policy(X) == 0)


def test_heat_nonlinear():
    p = heat_nonlinear(10)
    lin = heat_linear(10)
    assert np.all(p.f(np.zeros(10)) == 0)
    assert p.exact_ovf is None
    A_nl = linearize(p).A
    np.testing.assert_allclose(A_nl, lin.metadata["linearization"].A, atol=1e-5 * np.abs(A_nl).max())
    zero = Surrogate(GaussianKernel(1.0), FunctionalSet.from_list([PointEval(np.zeros(10))]), [0.0])
    x0 = 1e-3 * np.ones((1, 10))
    _, norms = rollout_costs(p, zero, x0, T=0.05, dt=1e-5)
    assert norms[0] < 1e-3 * np.linalg.norm(x0)
    assert np.all(feedback(p, np.zeros((1, 10)), x0) == 0)


def test_sample_box():
    dom = (-np.ones(2), np.ones(2))
    assert sample_box(dom, 0, 1).shape == (0, 2)
    np.testing.assert_array_equal(sample_box(dom, 50, 3), sample_box(dom, 50, 3))
    big = sample_box(dom, 10_000, 9)
    assert np.all(np.abs(big.mean(axis=0)) < 0.05)
    assert np.all((big >= -1) & (big <= 1))


def test_grid():
    assert sorted(map(tuple, grid_2d(-1, 1, 2))) == [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    assert grid_2d(-1, 1, 3).shape == (8, 2)
    assert grid_2d(-1, 1, 100).shape == (10_000, 2)
    assert grid_2d(-1, 1, 101).shape == (10_200, 2)
    with pytest.raises(ValueError):
        grid_2d(-1, 1, 1)


def test_make_problem():
    for name in PROBLEM_NAMES:
        p = make_problem(name, n_nodes=6)
        assert p.name == name
    assert make_problem("heat-linear", 7).state_dim == 7
    with pytest.raises(ValueError):
        make_problem("pendulum")
