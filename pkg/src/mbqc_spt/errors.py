"""Exception hierarchy shared by all modules."""


class MbqcSptError(Exception):
    """Base class for every error raised by this package."""


class NotProjectiveRep(MbqcSptError):
    pass


class NotMaximallyNoncommutative(MbqcSptError):
    pass


class UnsupportedGroup(MbqcSptError):
    pass


class NoSolution(MbqcSptError):
    pass


class NotInjective(MbqcSptError):
    pass


class DegenerateLeadingEigenvalue(MbqcSptError):
    pass


class OutOfRange(MbqcSptError):
    pass


class DimensionMismatch(MbqcSptError):
    pass


class InvalidCut(MbqcSptError):
    pass


class TooSmall(MbqcSptError):
    pass


class SizeOverflow(MbqcSptError):
    pass


class BadLayout(MbqcSptError):
    pass


class NoConvergence(MbqcSptError):
    pass


class NonNormalizable(MbqcSptError):
    pass


class NotInPhase(MbqcSptError):
    pass


class WrongCohomology(MbqcSptError):
    pass


class NotFactorized(MbqcSptError):
    pass


class NonlocalResult(MbqcSptError):
    pass


class NotInFamily(MbqcSptError):
    pass


class NotAdjacent(MbqcSptError):
    pass


class ZeroProbabilityBranch(MbqcSptError):
    pass


class NonPauliByproduct(MbqcSptError):
    pass


class InsufficientRange(MbqcSptError):
    pass


class GapClosed(MbqcSptError):
    """Raised when the spectral gap along a path falls below threshold."""

    def __init__(self, message, s_star=None, gap=None):
        super().__init__(message)
        self.s_star = s_star
        self.gap = gap


class ConfigError(MbqcSptError):
    """Config parse error; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
