"""Exception hierarchy shared across the package.

Every error raised on purpose derives from :class:`AmpRetrainError` so callers
(and the CLI) can map failure classes to exit codes without string matching.
"""


class AmpRetrainError(Exception):
    """Base class for all package errors."""


class ConfigError(AmpRetrainError, ValueError):
    """Invalid parameter or experiment configuration."""


class DomainError(AmpRetrainError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ShapeError(AmpRetrainError, ValueError):
    """Mismatched array shapes."""


class BracketError(AmpRetrainError, ValueError):
    """Root bracketing failed: no sign change on the given interval."""


class DivergenceError(AmpRetrainError, ArithmeticError):
    """Non-finite values appeared inside an iterative update."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class DegenerateModelError(AmpRetrainError, ValueError):
    """Model vector is degenerate (e.g. zero norm), no prediction defined."""


class DegenerateFitError(AmpRetrainError, ValueError):
    """Input data cannot support the requested fit."""


class ParseError(AmpRetrainError, ValueError):
    """Malformed input file."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line
