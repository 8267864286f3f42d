"""Error types raised by facefit"""


class FaceFitError(Exception):
    """Base class for all facefit errors"""


class DimensionError(FaceFitError, ValueError):
    """Coefficient or parameter vector has the wrong size"""


class InvalidModelError(FaceFitError, ValueError):
    """Model content breaks an invariant (NaN layers, bad sigma, broken mesh)"""


class ModelFormatError(FaceFitError, ValueError):
    """Model archive cannot be read; the message names the offending file"""

    def __init__(self, path, message: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {message}")


class ConfigError(FaceFitError, ValueError):
    """Malformed configuration, weight file or landmark file"""


class GradientError(FaceFitError, FloatingPointError):
    """Non-finite value in an energy term or one of its partials"""

    def __init__(self, term: str, message: str = "non-finite value"):
        self.term = term
        super().__init__(f"{message} in '{term}'")


class DivergenceError(FaceFitError, RuntimeError):
    """Energy exceeded the divergence guard during optimization"""

    def __init__(self, message: str, trajectory=None):
        self.trajectory = list(trajectory or [])
        super().__init__(message)
