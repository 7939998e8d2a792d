"""Exception types raised across the package."""


class ConfigError(ValueError):
    """Invalid workspace, octree or grid configuration."""


class CellBudgetError(ConfigError):
    """A grid configuration would allocate more cells than the budget allows."""


class OutOfBoundsError(IndexError):
    """A point or cell index falls outside the grid."""


class FormatError(ValueError):
    """A point-cloud, frame-stream or grid file could not be parsed."""
