"""Exception types shared across the package.

Invalid arguments raise the builtin ValueError; everything that can go
wrong *during* a computation gets a dedicated class below so callers can
tell configuration mistakes from numerical failures.
"""


class Ghm1dError(Exception):
    """Base class for computation failures."""


class DegenerateStateError(Ghm1dError):
    """A bond update produced no usable singular values."""


class DivergenceError(Ghm1dError):
    """Energy trace became non-finite during evolution."""


class DegeneracyError(Ghm1dError):
    """Exact ground multiplet is degenerate and no tie-break was requested."""


class SolverError(Ghm1dError):
    """An iterative eigensolver failed to converge or failed residual checks."""


class InvalidStateError(Ghm1dError):
    """A tensor-network state violates its structural invariants."""


class RootFindError(Ghm1dError):
    """Chemical-potential tuning failed to bracket or converge.

    Carries the best point seen so far in ``best`` as a dict.
    """

    def __init__(self, message, best=None, trace=None):
        super().__init__(message)
        self.best = best
        self.trace = trace or []


class ConfigError(Ghm1dError):
    """Configuration text is invalid; message names the key and line."""
