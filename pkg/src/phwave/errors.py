"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: configuration problems exit 1,
numerical failures exit 2 and invariant violations exit 3.
"""


class PhwaveError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 1


class ConfigError(PhwaveError):
    """Invalid user input: config schema, expressions, meshes, coefficients."""

    def __init__(self, message, pointer=None):
        self.pointer = pointer
        if pointer is not None:
            message = f"{pointer}: {message}"
        super().__init__(message)


class ExprError(ConfigError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} at byte offset {offset}")


class ExprDomainError(ExprError):
    """Evaluation left the real domain (division by zero, sqrt of a negative...)."""

    def __init__(self, message, subexpr, point=None):
        self.subexpr = subexpr
        self.point = point
        where = "" if point is None else f" at (x, y) = ({point[0]:.17g}, {point[1]:.17g})"
        super().__init__(f"{message} in '{subexpr}'{where}")


class MeshError(ConfigError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CoefficientError(ConfigError):
    """A coefficient field violates positivity / definiteness at a sample point."""


class NumericalError(PhwaveError):
    exit_code = 2


class SingularMatrixError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    def __init__(self, message, history=()):
        self.history = list(history)
        super().__init__(message)


class NearSpectrumError(SingularMatrixError):
    """The pencil S(lambda) is numerically singular: lambda sits on the discrete spectrum."""

    def __init__(self, lam, sigma_min=None):
        self.lam = lam
        self.sigma_min = sigma_min
        est = "" if sigma_min is None else f" (sigma_min estimate {sigma_min:.3e})"
        super().__init__(f"lambda = {lam} near discrete spectrum{est}")


class SizeLimitError(NumericalError):
    pass


class InvariantViolation(PhwaveError):
    exit_code = 3
