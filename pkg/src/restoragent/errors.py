"""Exception hierarchy shared across the package."""


class RestorAgentError(Exception):
    """Base class for all domain errors."""


class IoError(RestorAgentError):
    """File could not be read or written."""


class FormatError(RestorAgentError):
    """File exists but is not a supported image format."""


class InvalidParam(RestorAgentError):
    """A parameter is outside its documented range."""


class ShapeMismatch(RestorAgentError):
    """Two images (or arrays) that must agree in shape do not."""


class TooSmall(RestorAgentError):
    """Image is below the minimum size an operation requires."""


class StorageError(RestorAgentError):
    """Insight bank persistence failure."""


class DimMismatch(RestorAgentError):
    """Vector dimension does not match the index dimension."""


class NoCandidateTool(RestorAgentError):
    """No registered tool supports the requested task."""


class UnknownTool(RestorAgentError):
    """tool_id is not present in the registry."""


class ToolFailure(RestorAgentError):
    """An external tool call failed (non-200, timeout, malformed reply)."""


class ShapeViolation(RestorAgentError):
    """A tool returned an image whose dimensions differ from its input."""


class BackendUnavailable(RestorAgentError):
    """An optional HTTP backend could not be reached."""


class ProtocolError(RestorAgentError):
    """An HTTP backend answered with a malformed payload."""


class DegeneratePolicy(RestorAgentError):
    """A policy probability fell below the numeric floor."""


class LengthMismatch(RestorAgentError):
    """Two per-sample lists that must align do not."""
