"""Benchmark problems: academic toy system, Van der Pol oscillator, and the
Kansa-discretized linear and Zeldovich-type nonlinear heat equations.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .care import LinearizedSystem, linearize, lqr_feedback, solve_care
from .ocp import ControlProblem

__all__ = [
    "toy_problem",
    "TOY_POLICIES",
    "linear_quadratic_problem",
    "vdp_problem",
    "HeatDiscretization",
    "kansa_discretize",
    "heat_linear",
    "heat_nonlinear",
    "sample_box",
    "grid_2d",
    "PROBLEM_NAMES",
    "make_problem",
]

# shape parameter of the Dirichlet-adapted collocation kernel
HEAT_KERNEL_SHAPE = 3000.0
# supports of the four actuator indicator functions on (0, 1)
ACTUATOR_SUPPORTS = ((0.1, 0.2), (0.3, 0.4), (0.6, 0.7), (0.8, 0.9))


def _sq(x):
    return np.einsum("...i,...i->...", x, x)


TOY_POLICIES = ("sin-product", "sin-sum")


def toy_problem(initial_policy="sin-product"):
    """Two-state, one-input system whose optimal value is x1^2/2 + x2^2.

    ``initial_policy`` picks the bundled starting feedback:

    * ``"sin-product"``: u0 = -3/2 sin(x1)(x1 + x2), stabilizing on the whole box.
    * ``"sin-sum"``: u0 = -3/2 sin(x1 + x2).  Its closed loop has a saddle
      equilibrium near (-0.348, -0.348) inside the box, where the GHJB
      equation has no solution, so greedy residuals stall near 1.
    """
    if initial_policy not in TOY_POLICIES:
        raise ValueError(f"unknown toy policy {initial_policy!r}; valid options: {', '.join(TOY_POLICIES)}")

    def f(x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([-x1 + x2, -0.5 * (x1 + x2) + 0.5 * x2 * np.sin(x1) ** 2], axis=-1)

    def g(x):
        x = np.asarray(x, dtype=float)
        x1 = x[..., 0]
        return np.stack([np.zeros_like(x1), np.sin(x1)], axis=-1)[..., None]

    def v_star(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * x[..., 0] ** 2 + x[..., 1] ** 2

    def u0_product(x):
        x = np.asarray(x, dtype=float)
        return (-1.5 * np.sin(x[..., 0]) * (x[..., 0] + x[..., 1]))[..., None]

    def u0_sum(x):
        x = np.asarray(x, dtype=float)
        return (-1.5 * np.sin(x[..., 0] + x[..., 1]))[..., None]

    return ControlProblem(
        f=f,
        g=g,
        h=lambda x: _sq(np.asarray(x, dtype=float)),
        R=np.eye(1),
        domain=(-np.ones(2), np.ones(2)),
        exact_ovf=v_star,
        initial_policy=u0_product if initial_policy == "sin-product" else u0_sum,
        name="toy",
        metadata={"initial_policy": initial_policy},
    )


def vdp_problem():
    """Controlled Van der Pol oscillator with an LQR initial policy."""

    def f(x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([x2, -x1 + x2 * (1.0 - x1**2)], axis=-1)

    def g(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.array([[0.0], [1.0]]), x.shape[:-1] + (2, 1))

    p = ControlProblem(
        f=f,
        g=g,
        h=lambda x: _sq(np.asarray(x, dtype=float)),
        R=np.array([[0.1]]),
        domain=(-np.ones(2), np.ones(2)),
        name="vdp",
    )
    sys = linearize(p)
    P = solve_care(sys)
    return replace(p, initial_policy=lqr_feedback(sys, P), metadata={"P": P, "linearization": sys})


def linear_quadratic_problem(A, B, Q=None, R=None, domain=None, name="lqr"):
    """x' = A x + B u with cost <x, Q x> + <u, R u>; exact value <x, P x> from the CARE.

    The bundled initial policy is the optimal LQR feedback.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    N = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(N, -1)
    Q = np.eye(N) if Q is None else np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.eye(B.shape[1]) if R is None else np.atleast_2d(np.asarray(R, dtype=float))
    if domain is None:
        domain = (-np.ones(N), np.ones(N))
    sys = LinearizedSystem(A, B, Q, R)
    P = solve_care(sys)

    def value(x):
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, P, x)

    return ControlProblem(
        f=lambda x: np.asarray(x, dtype=float) @ A.T,
        g=lambda x: np.broadcast_to(B, np.shape(x)[:-1] + B.shape),
        h=lambda x: np.einsum("...i,ij,...j->...", np.asarray(x, dtype=float), Q, np.asarray(x, dtype=float)),
        R=R,
        domain=domain,
        exact_ovf=value,
        initial_policy=lqr_feedback(sys, P),
        name=name,
        metadata={"P": P, "linearization": sys},
    )


def _heat_kernel(xi, eta):
    w = xi * (1 - xi) * eta * (1 - eta)
    return np.exp(-HEAT_KERNEL_SHAPE * (xi - eta) ** 2) * w


def _heat_kernel_dd2(xi, eta):
    """Second derivative of the collocation kernel in its second argument."""
    c = HEAT_KERNEL_SHAPE
    diff = xi - eta
    E = np.exp(-c * diff**2)
    dE = 2 * c * diff * E  # d/deta
    ddE = (-2 * c + 4 * c**2 * diff**2) * E
    w_eta = eta * (1 - eta)
    dw_eta = 1 - 2 * eta
    return xi * (1 - xi) * (ddE * w_eta + 2 * dE * dw_eta - 2 * E)


@dataclass(frozen=True, eq=False)
class HeatDiscretization:
    """Kansa collocation of the 1-D heat equation with Dirichlet conditions.

    ``K_lap[l, i]`` is the Laplacian of the basis function centered at node i,
    evaluated at collocation node l, so that the ODE for the coefficients
    reads ``K x' = K_lap x + b u``.
    """

    n_nodes: int
    xi: np.ndarray
    K: np.ndarray
    K_lap: np.ndarray
    A: np.ndarray
    B: np.ndarray
    b: np.ndarray
    K_factor: tuple

    def solve_K(self, y):
        """K^{-1} y for y of shape (..., N)."""
        y = np.asarray(y, dtype=float)
        flat = y.reshape(-1, self.n_nodes).T
        return cho_solve(self.K_factor, flat).T.reshape(y.shape)

    @property
    def condition_number(self):
        return float(np.linalg.cond(self.K))


def kansa_discretize(n_nodes=50):
    if n_nodes < 2:
        raise ValueError("need at least two collocation nodes")
    xi = np.arange(1, n_nodes + 1) / (n_nodes + 1)
    K = _heat_kernel(xi[:, None], xi[None, :])
    K = 0.5 * (K + K.T)
    K_lap = _heat_kernel_dd2(xi[None, :], xi[:, None])
    b = np.column_stack([((xi >= lo) & (xi <= hi)).astype(float) for lo, hi in ACTUATOR_SUPPORTS])
    try:
        factor = cho_factor(K, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"collocation Gram is numerically singular for n_nodes={n_nodes} "
            f"(condition number {np.linalg.cond(K):.2e})"
        ) from exc
    A = cho_solve(factor, K_lap)
    B = cho_solve(factor, b)
    return HeatDiscretization(n_nodes, xi, K, K_lap, A, B, b, factor)


def _heat_problem(disc, name, nonlinear):
    N = disc.n_nodes
    A, B = disc.A, disc.B
    R = np.eye(B.shape[1]) / 100.0
    sys = LinearizedSystem(A, B, np.eye(N), R)
    P = solve_care(sys)

    if nonlinear:

        def f(x):
            x = np.asarray(x, dtype=float)
            Kx = x @ disc.K
            return x @ A.T + disc.solve_K(Kx**2 - Kx**3)

    else:

        def f(x):
            return np.asarray(x, dtype=float) @ A.T

    def g(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(B, x.shape[:-1] + B.shape)

    def u0(x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (B.shape[1],))

    def quadratic_value(x):
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, P, x)

    return ControlProblem(
        f=f,
        g=g,
        h=lambda x: _sq(np.asarray(x, dtype=float)),
        R=R,
        domain=(np.zeros(N), np.full(N, 10.0)),
        exact_ovf=None if nonlinear else quadratic_value,
        initial_policy=u0,
        name=name,
        metadata={"P": P, "linearization": sys, "discretization": disc},
    )


def heat_linear(n_nodes=50):
    """Kansa-discretized linear heat equation with four indicator actuators."""
    return _heat_problem(kansa_discretize(n_nodes), "heat-linear", nonlinear=False)


def heat_nonlinear(n_nodes=50):
    """Zeldovich-type heat equation theta_t = theta_xx + theta^2 - theta^3 + actuation."""
    return _heat_problem(kansa_discretize(n_nodes), "heat-nonlinear", nonlinear=True)


def sample_box(domain, count, seed, exclude_origin=True):
    """Uniform samples from the box ``domain = (lower, upper)``.

    Uses numpy's PCG64 generator seeded with ``seed``; samples within 1e-9 of
    the origin are rejected and redrawn when ``exclude_origin`` is set.
    """
    lower, upper = (np.asarray(b, dtype=float).reshape(-1) for b in domain)
    rng = np.random.default_rng(seed)
    out = np.empty((0, lower.shape[0]))
    while out.shape[0] < count:
        draw = rng.uniform(lower, upper, size=(count - out.shape[0], lower.shape[0]))
        if exclude_origin:
            draw = draw[np.linalg.norm(draw, axis=1) >= 1e-9]
        out = np.vstack([out, draw])
    return out


def grid_2d(a, b, m):
    """Tensor grid G x G on [a, b]^2 with m nodes per axis, origin removed."""
    if m < 2:
        raise ValueError("grid needs at least two nodes per axis")
    G = np.linspace(a, b, m)
    X1, X2 = np.meshgrid(G, G, indexing="ij")
    pts = np.column_stack([X1.ravel(), X2.ravel()])
    return pts[np.linalg.norm(pts, axis=1) > 1e-12]


PROBLEM_NAMES = ("toy", "vdp", "heat-linear", "heat-nonlinear")


def make_problem(name, n_nodes=None):
    if name == "toy":
        return toy_problem()
    if name == "vdp":
        return vdp_problem()
    if name == "heat-linear":
        return heat_linear(50 if n_nodes is None else int(n_nodes))
    if name == "heat-nonlinear":
        return heat_nonlinear(50 if n_nodes is None else int(n_nodes))
    raise ValueError(f"unknown problem {name!r}; valid options: {', '.join(PROBLEM_NAMES)}")
