"""
Exception hierarchy
User errors map to CLI exit code 1, everything else to exit code 2
"""


class UnifError(Exception):
    """Base class for all errors raised by the package"""


class UserError(UnifError):
    """Errors caused by bad input (files, flags, configuration)"""


class ConfigError(UserError):
    """Invalid configuration file or flag combination"""


class DatasetError(UserError):
    """Dataset directory is missing, empty or inconsistent"""


class MalformedFileError(UserError, ValueError):
    """A PLY/OBJ/JSON/model file could not be parsed"""

    def __init__(self, path, detail: str, location: str | None = None):
        self.path = str(path)
        self.detail = detail
        self.location = location
        where = f" at {location}" if location else ""
        super().__init__(f"Malformed file {self.path}{where}: {detail}")


class PoseMismatchError(UserError, ValueError):
    """A pose does not match the skeleton it is used with"""


class DegenerateGeometryError(UnifError, ValueError):
    """Zero-length bones, coincident points and similar degenerate input"""


class NonFiniteError(UnifError, ArithmeticError):
    """A loss term, gradient or input became NaN/inf"""

    def __init__(self, name: str, value=None):
        self.name = name
        self.value = value
        super().__init__(f"Non-finite value in '{name}'" + (f": {value}" if value is not None else ""))


class TrainingDivergedError(UnifError, RuntimeError):
    """Total loss exceeded the divergence threshold"""

    def __init__(self, epoch: int, total: float, threshold: float, report: dict | None = None):
        self.epoch = epoch
        self.total = total
        self.threshold = threshold
        self.report = report or {}
        terms = ", ".join(f"{k}={v:.4g}" for k, v in self.report.items())
        super().__init__(
            f"Training diverged at epoch {epoch}: total={total:.4g} > {threshold:.4g}"
            + (f" ({terms})" if terms else "")
        )
