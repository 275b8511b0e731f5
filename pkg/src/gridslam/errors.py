"""Exception types shared across the package."""


class GridSlamError(Exception):
    """Base class for all package errors."""


class OutOfBounds(GridSlamError):
    """A point, pose, or cell lies outside the grid."""


class DomainError(GridSlamError):
    """A value violates a density's support, e.g. a reading outside (0, d_max)."""


class EmptyConsistentSet(GridSlamError):
    """A consistency set has no candidate cells."""


class AllZeroWeights(GridSlamError):
    """Every candidate carries log-zero weight; resampling is impossible."""


class InsideWall(GridSlamError):
    """A simulated pose occupies a wall cell."""


class UnreachableWaypoint(GridSlamError):
    """The simulated robot would have to enter a wall to reach its waypoint."""


class ParseError(GridSlamError):
    """A file does not conform to its format. Carries a 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SchemaError(GridSlamError):
    """File contents disagree with the file's own header."""


class RaggedRows(GridSlamError):
    """World rows have inconsistent lengths."""


class GeometryMismatch(GridSlamError):
    """Two grids that must share a geometry do not."""


class LengthMismatch(GridSlamError):
    """Two paths that must have equal length do not."""
