"""Exception and warning types shared across the solver stack."""


class ELEulerError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ELEulerError):
    """Invalid configuration, malformed input data, or bad file contents."""


class GridMismatchError(ELEulerError):
    """Operands live on different grids or have incompatible shapes."""


class CFLError(ELEulerError):
    """Advective CFL limit violated; the explicit march refuses to run."""


class SolverError(ELEulerError):
    """Numerical failure: NaN state, Newton breakdown, or I/O-free solver fault."""


class ConvergenceError(SolverError):
    """A fixed-point iteration failed to contract within its budget."""


class VolumePreservationWarning(UserWarning):
    """Composition argument is not volume preserving to tolerance; the
    composition norm bound is no longer guaranteed."""
