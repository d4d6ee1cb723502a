"""Error taxonomy shared across the package.

ParameterError covers bad values handed to constructors or operations,
StateError covers operations invoked in the wrong lifecycle phase, and
NoPredictionError covers anytime queries made before any denoiser output
exists.  The service layer maps these onto 400 / 409 responses and the
CLI onto exit codes 2 / 3.
"""


class ParameterError(ValueError):
    """A value violates an operation's preconditions."""


class StateError(RuntimeError):
    """An operation was called in a phase that does not allow it."""


class NoPredictionError(StateError):
    """An anytime result was requested before any prediction was recorded."""
