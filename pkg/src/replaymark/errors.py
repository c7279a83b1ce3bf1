"""Exception types shared across the package."""


class ReplaymarkError(Exception):
    """Base class for all package errors."""


class InvalidMatrix(ReplaymarkError):
    """Matrix contains NaN/Inf entries or is otherwise malformed."""


class ShapeError(ReplaymarkError):
    """Dimensions of the supplied operands are inconsistent."""


class NotAffine(ReplaymarkError):
    """A matrix expression contains a product of two decision variables."""


class TooManyVertices(ReplaymarkError):
    """Parameter box has more than 2**16 corners."""


class BracketError(ReplaymarkError):
    """Bisection endpoints do not bracket the feasibility boundary."""


class UnstableSystem(ReplaymarkError):
    """A frequency-domain computation was requested for a non-Hurwitz system."""


class DivergenceDetected(ReplaymarkError):
    """Simulated state norm exceeded the divergence guard.

    Carries the partial trace simulated so far in ``partial_trace``.
    """

    def __init__(self, message, partial_trace=None):
        super().__init__(message)
        self.partial_trace = partial_trace


class DegenerateWindow(ReplaymarkError):
    """Denominator window of the D index carries (numerically) no signal."""


class EmptyCalibrationSet(ReplaymarkError):
    """Threshold calibration was called without enough attack-free traces."""


class InitInfeasible(ReplaymarkError):
    """The bootstrap problem of an iterative design loop is infeasible."""


class SolverFailure(ReplaymarkError):
    """An SDP solve inside an iterative design loop failed.

    ``iteration`` holds the loop index at which the failure occurred.
    """

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class ConfigError(ReplaymarkError):
    """Experiment configuration file is malformed.

    ``line`` and ``field`` identify the offending location when known.
    """

    def __init__(self, message, line=None, field=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field '{field}'")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.line = line
        self.field = field
