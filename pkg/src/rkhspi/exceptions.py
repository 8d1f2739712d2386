"""Exception types raised by the solver."""

import numpy as np


class WellPosednessError(ValueError):
    """A policy-evaluation functional has a vanishing direction f(x) + g(x)u(x)."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class DegenerateGramError(np.linalg.LinAlgError):
    """The generalized Gram matrix could not be factorized even at maximum jitter."""


class TrajectoryEscapeError(RuntimeError):
    """A closed-loop trajectory left the escape box around the domain."""


class CAREError(RuntimeError):
    """The Riccati solver found no stabilizing gain or failed to converge."""
