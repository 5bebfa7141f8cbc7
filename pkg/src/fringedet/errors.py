"""Exception hierarchy shared across the package."""


class FringeError(Exception):
    """Base class for all package errors."""


class InvalidEllipse(FringeError, ValueError):
    pass


class DegenerateAngle(FringeError, ValueError):
    pass


class IoError(FringeError, OSError):
    pass


class ParseError(FringeError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class ConfigError(FringeError, ValueError):
    pass


class PlacementError(FringeError, RuntimeError):
    pass


class CellOverflow(FringeError, ValueError):
    def __init__(self, row, col, count, capacity):
        self.row, self.col, self.count, self.capacity = row, col, count, capacity
        super().__init__(
            f"cell (row={row}, col={col}) holds {count} antinodes but has only {capacity} predictors"
        )


class ShapeError(FringeError, ValueError):
    pass


class StaleTape(FringeError, RuntimeError):
    """Raised when backward is called without a recorded forward pass."""


class TrainingDiverged(FringeError, RuntimeError):
    def __init__(self, message, checkpoint=None):
        self.checkpoint = checkpoint
        super().__init__(message)


class Undefined(FringeError, ValueError):
    """A metric was requested on an input where it has no defined value."""


class EmptySeries(FringeError, ValueError):
    pass


class NoOscillation(FringeError, ValueError):
    pass


class FitDiverged(FringeError, RuntimeError):
    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)
