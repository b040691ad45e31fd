"""
Error hierarchy for edgeband

Library code raises these; the CLI and the HTTP API translate them into exit
codes and status codes respectively.
"""
from typing import Optional


class EdgeBandError(Exception):
    """Base class for all edgeband failures"""


class ConfigurationError(EdgeBandError):
    """Invalid or inconsistent configuration (CLI exit code 3)"""


class InvalidArgumentError(EdgeBandError, ValueError):
    """A numeric argument is outside its admissible range"""


class SceneValidationError(EdgeBandError):
    """A synthetic scene violates its model constraints"""


class ImageParseError(EdgeBandError):
    """An input image could not be parsed (CLI exit code 2)"""

    def __init__(self, message: str, path: Optional[str] = None, offset: Optional[int] = None):
        self.path = path
        self.offset = offset
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class DegenerateCurvatureError(EdgeBandError):
    """The Hessian-type variance component vanishes where a width is requested"""


class StripEstimationError(EdgeBandError):
    """Estimation failed on a single vertical strip"""

    def __init__(self, x: float, cause: Exception):
        self.x = x
        self.cause = cause
        super().__init__(f"strip estimation failed at x={x:.6g}: {cause}")
