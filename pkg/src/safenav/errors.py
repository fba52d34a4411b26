"""Exceptions raised by safenav.

All of them derive from ValueError so callers that only guard against invalid
input keep working.
"""


class MapParseError(ValueError):
    """Static map text does not follow the map grammar.

    Attributes:
        line: 1-based line number of the offending input.
        column: 1-based column, or 0 when the whole line is at fault.
    """

    def __init__(self, message: str, line: int, column: int = 0) -> None:
        self.line = line
        self.column = column
        where = f"line {line}" if column == 0 else f"line {line}, column {column}"
        super().__init__(f"{where}: {message}")


class MapBoundsError(ValueError):
    """A point or index lies outside the map extent."""


class SlipAngleDomainError(ValueError):
    """Steering angle outside the open interval (-pi/2, pi/2)."""


class PathValidationError(ValueError):
    """Waypoint path violates the constant-gap requirement.

    Attributes:
        index: Index of the first offending waypoint.
    """

    def __init__(self, message: str, index: int) -> None:
        self.index = index
        super().__init__(f"waypoint {index}: {message}")


class ConstraintBuildError(ValueError):
    """Stage constraints cannot be built from the supplied boundaries."""


class QpBuildError(ValueError):
    """Quadratic program inputs have inconsistent dimensions or a bad Hessian."""


class ScenarioConfigError(ValueError):
    """Scenario configuration is missing a key or holds an invalid value."""
