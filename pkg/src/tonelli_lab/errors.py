"""Exception types raised by the numerical routines.

Each class carries the diagnostics that were available when the failure was
detected, so callers (and the CLI) can report something more useful than a
bare message.
"""


class TonelliError(Exception):
    """Base class. ``info`` holds structured diagnostics."""

    exit_code = 2

    def __init__(self, message, **info):
        super().__init__(message)
        self.info = info


class PreconditionError(TonelliError, ValueError):
    """An input violates a documented precondition."""

    exit_code = 1


class ConfigError(TonelliError, ValueError):
    exit_code = 1


class EvaluationError(TonelliError):
    """A Hamiltonian returned a non-finite value or derivative."""


class StepFailure(TonelliError):
    """An implicit integrator step did not converge; try a smaller step."""


class LegendreError(TonelliError):
    """Newton inversion of the fiber derivative failed."""


class NoMinimizerError(TonelliError):
    """No start of the action minimization converged."""


class TorusConstructionError(TonelliError):
    """A periodic torus could not be built from its sections."""


class SymplecticConsistencyError(TonelliError):
    """A constructed torus failed a Lagrangian or exactness check."""


class InvalidPlaneError(TonelliError):
    """A Lagrangian plane representation is not valid."""


class NonFlatTwistError(TonelliError):
    """The twist matrix depends on the angle beyond tolerance."""


class HypothesisViolated(TonelliError):
    """The base torus fails the no-conjugate-points hypothesis."""

    exit_code = 3


class SmallDivisorError(TonelliError):
    """A small divisor fell below the floor during a Newton step."""


class NewtonStagnation(TonelliError):
    """The torus Newton iteration stopped decreasing the error."""


class NotConvergedError(TonelliError):
    """An iteration reached its budget before meeting its tolerance."""
