from typing import Optional


class ToolkitError(Exception):
    """Base error carrying a readable detail and the process exit code"""

    exit_code: int = 5

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code

    def __str__(self) -> str:
        return self.detail


class ConfigError(ToolkitError):
    """Missing or invalid configuration"""

    exit_code = 2


class DomainError(ConfigError):
    """Argument outside the model domain"""


class OutOfRangeError(DomainError):
    """Content above the image X(a, x_M) of the flow"""


class AssumptionError(ConfigError):
    """Model violates a structural assumption a solver relies on"""


class PreconditionError(ConfigError):
    """Hypotheses of a derived construction do not hold"""


class CFLError(ConfigError):
    """Time step too large for a positivity-preserving step"""

    exit_code = 4


class SubcriticalError(ToolkitError):
    """No positive growth exponent exists"""

    exit_code = 3


class ResolutionError(ToolkitError):
    """Grid too coarse or too short for the requested accuracy"""

    exit_code = 4


class NumericError(ToolkitError):
    """Numerical procedure failed"""

    exit_code = 5


class NoSolutionError(NumericError):
    pass


class DegenerateError(NumericError):
    pass


class RegimeError(NumericError):
    pass
