"""Exception types shared across the package."""


class SurfharmError(Exception):
    """Base class for all package-specific errors."""


class ParseError(SurfharmError, ValueError):
    """A text format (mesh, atoms, table, config) could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MeshError(SurfharmError, ValueError):
    """A mesh violates a structural invariant."""


class SpectralError(SurfharmError, RuntimeError):
    """Eigen-decomposition failed or produced an invalid basis."""


class MatchError(SurfharmError, RuntimeError):
    """Surface correspondence / alignment failed.

    ``stage`` names the pipeline step that failed (interface, spectrum,
    fmap, p2p, align, ...) when raised from a multi-stage routine.
    """

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage
