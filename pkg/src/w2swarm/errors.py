class SwarmError(Exception):
    """Base class for errors raised by w2swarm."""


class ValidationError(SwarmError, ValueError):
    """Input violates a documented invariant."""


class NumericalInvariantError(SwarmError):
    """A computed result failed a numerical self-check."""


class DegenerateMatchingError(SwarmError):
    """The optimal matching is not unique, so the envelope gradient is undefined."""
