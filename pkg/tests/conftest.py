import numpy as np
import pytest

from rkhspi.care import linearize, lqr_bounds, solve_care
from rkhspi.kernels import make_kernel
from rkhspi.ocp import QuadraticBounds
from rkhspi.problems import grid_2d, sample_box, toy_problem, vdp_problem
from rkhspi.rkhs_pi import GreedyConfig, PIConfig, run_rkhs_pi

_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n = mark.args[0]
    failed = rep.failed or (rep.when == "call" and rep.skipped)
    if rep.when == "call" or failed:
        detail = "; ".join(str(v) for k, v in rep.user_properties if k == "detail")
        prev = _criteria.get(n)
        ok = not failed and (prev is None or prev[0])
        _criteria[n] = (ok, detail or (prev[1] if prev else ""))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        ok, detail = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _fit(problem, gamma_squared, epsilon):
    k = make_kernel("gaussian", gamma_squared=gamma_squared)
    P = problem.metadata.get("P")
    if P is None:
        P = solve_care(linearize(problem))
    mode = QuadraticBounds(*lqr_bounds(P))
    gc = GreedyConfig(grid_2d(-1.0, 1.0, 100), 300, 1e-5)
    pc = PIConfig(
        epsilon=epsilon,
        max_pi_iters=10,
        verification_mode=mode,
        test_points=sample_box(problem.domain, 100, 1),
    )
    s, history = run_rkhs_pi(problem, k, None, gc, pc)
    return problem, s, history, mode


@pytest.fixture(scope="session")
def toy_fit():
    """Converged toy surrogate under the toy preset settings."""
    return _fit(toy_problem(), 1.7, 1e-7)


@pytest.fixture(scope="session")
def vdp_fit():
    return _fit(vdp_problem(), 1.7, 1e-6)
