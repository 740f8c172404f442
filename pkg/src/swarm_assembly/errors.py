"""Exception types raised across the package."""


class SwarmAssemblyError(Exception):
    """Base class for all package errors."""


class MalformedInput(SwarmAssemblyError):
    pass


class EmptyShape(SwarmAssemblyError):
    pass


class UnknownRobot(SwarmAssemblyError):
    pass


class NotInRange(SwarmAssemblyError):
    pass


class InsufficientNeighbors(SwarmAssemblyError):
    pass


class LostAggregate(SwarmAssemblyError):
    pass


class ZeroCapacity(SwarmAssemblyError):
    pass


class NoMotionRecorded(SwarmAssemblyError):
    pass


class TickNotSampled(SwarmAssemblyError):
    pass


class ConfigError(SwarmAssemblyError):
    pass


class ShapeError(SwarmAssemblyError):
    pass


class PlacementOverflow(SwarmAssemblyError):
    pass


class ControllerError(SwarmAssemblyError):
    """Wraps an exception raised by a robot controller during a tick."""

    def __init__(self, robot_id, tick, cause):
        super().__init__(f"robot {robot_id} failed at tick {tick}: {cause!r}")
        self.robot_id = robot_id
        self.tick = tick
        self.cause = cause
