"""Exception hierarchy shared across the package."""


class DynRemovalError(Exception):
    """Base class for all package errors."""


class ConfigError(DynRemovalError):
    """Invalid or unknown configuration values."""


class FormatError(DynRemovalError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class OrderError(DynRemovalError):
    """Sweeps delivered out of index order."""


class PoseError(DynRemovalError):
    """Pose with a non-rotation matrix or non-finite entries."""


class InputError(DynRemovalError):
    """Evaluation input is incomplete or inconsistent."""
