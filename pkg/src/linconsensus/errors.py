"""Exception hierarchy shared by every module."""


class ConsensusError(Exception):
    """Base class for all errors raised by linconsensus."""


class InputError(ConsensusError, ValueError):
    """Malformed input: wrong shape, non-finite entries, bad file contents."""


class ComputationError(ConsensusError, ArithmeticError):
    """A numerical kernel failed (eigen-solver breakdown, overflow)."""


class StructuralError(ConsensusError):
    """The input lacks a structural property the operation requires."""


class InconsistencyError(ConsensusError):
    """Two quantities that must agree in exact arithmetic did not."""


class ConditioningError(ConsensusError):
    """A transform is too ill-conditioned to use safely."""


class GenerationError(ConsensusError):
    """A random generator ran out of its resampling budget."""
