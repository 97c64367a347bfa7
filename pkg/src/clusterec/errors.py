"""Exception types shared across the package."""


class ClusterecError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(ClusterecError, ValueError):
    """Invalid input: bad vectors, unknown ids, out-of-range parameters."""


class StateError(ClusterecError, RuntimeError):
    """Operation not valid for the current state (empty model, no history)."""


class CatalogParseError(ValidationError):
    """Malformed catalog or ratings record; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class PersistenceError(ClusterecError, RuntimeError):
    """Corrupt, truncated, or version-incompatible model file."""


class JudgeError(ClusterecError, RuntimeError):
    """Judge backend misconfigured or persistently unreachable."""
