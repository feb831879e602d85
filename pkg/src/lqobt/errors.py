"""Exception types shared across the package."""


class LyapunovError(RuntimeError):
    """Sign-function iteration failed to converge.

    Raised with the iteration count in the message. Non-convergence
    usually means the coefficient matrix is not Hurwitz, in which case
    the iteration has no stable fixed point.
    """


class IndefiniteMatrixError(ValueError):
    """A matrix required to be positive semidefinite is substantially indefinite."""


class UnstableSystemError(ValueError):
    """A system required to be asymptotically stable has an eigenvalue with Re >= 0."""


class FrequencyCollisionError(ValueError):
    """A resolvent is evaluated at (numerically) an eigenvalue, or two
    sampling frequencies collide and break a divided difference."""
