"""Exception types shared across the package.

Every error raised by the library derives from TsvarError so callers can
catch library failures with a single except clause. The CLI maps these to
exit codes (config and usage problems to 2, numeric failures to 3).
"""


class TsvarError(Exception):
    """Base class for all library errors."""


# ---------------------------------------------------------------- scales


class TooFewPoints(TsvarError):
    """A time scale needs at least three distinct points."""


class NonFiniteInput(TsvarError):
    """Scale construction received a NaN or infinity."""


class BadParameters(TsvarError):
    """Scale generator parameters are inconsistent (h <= 0, b not on the grid, ...)."""


class PointNotInScale(TsvarError):
    """A lookup point does not match any scale point within tolerance."""


class DomainTooSmall(TsvarError):
    """A grid function has too few points for the requested operation."""


# ----------------------------------------------------------- expressions


class ExpressionSyntaxError(TsvarError):
    """Malformed expression text. `position` is the 0-based offset of the failure."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (position {position})")
        self.position = position


class UnknownIdentifier(TsvarError):
    """An identifier is not an allowed variable, parameter, or function name."""

    def __init__(self, name: str, position: int = -1):
        super().__init__(f"unknown identifier {name!r}")
        self.name = name
        self.position = position


class UnboundVariable(TsvarError):
    """Evaluation bindings are missing a variable used by the expression."""

    def __init__(self, name: str):
        super().__init__(f"unbound variable {name!r}")
        self.name = name


class DomainError(TsvarError):
    """Real-arithmetic domain violation (log of a non-positive value, etc.)."""


# --------------------------------------------------------------- problems


class TrajectoryDomainError(TsvarError):
    """Trajectory values do not cover the domain the problem requires."""


# -------------------------------------------------------------- residuals


class EndpointNotFree(TsvarError):
    """Natural boundary residuals were requested but both endpoints are fixed."""


class NoPointBeyondB(TsvarError):
    """A free right endpoint in delta flavor needs a scale point beyond b."""


class NoPointBelowA(TsvarError):
    """A free left endpoint in nabla flavor needs a scale point below a."""


class ScaleKindMismatch(TsvarError):
    """The corollary residual was asked for on a scale of the wrong kind."""


# ----------------------------------------------------------------- solver


class NotConverged(TsvarError):
    """Raised only when a caller explicitly asks for strict convergence."""


class LineSearchFailure(TsvarError):
    """Backtracking could not find an acceptable step."""


class SearchSpaceTooLarge(TsvarError):
    """The brute-force grid exceeds the supported instance size."""


class EmptyFeasibleSet(TsvarError):
    """No brute-force candidate satisfies the constraint within the slack."""


# ---------------------------------------------------------------- duality


class FlavorMismatch(TsvarError):
    """A dual pair needs a delta-flavored primal problem."""


class ScaleMismatch(TsvarError):
    """Trajectory and problem refer to different scales."""


# -------------------------------------------------------------------- cli


class ParseError(TsvarError):
    """Problem file could not be parsed. `line` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(TsvarError):
    """Problem file parsed but the resulting spec is invalid."""

    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics
