"""Exception hierarchy for igdiv."""


class IGError(Exception):
    """Base class for all numerical and configuration errors raised by igdiv."""


class ConfigError(IGError, ValueError):
    pass


class PointOutOfDomain(IGError, ValueError):
    pass


class FiniteDifferenceStencilOutOfDomain(PointOutOfDomain):
    pass


class NotHessianManifold(IGError, TypeError):
    pass


class GradientInversionFailed(IGError):
    pass


class TrajectoryLeftDomain(IGError):
    def __init__(self, message, exit_time=None):
        super().__init__(message)
        self.exit_time = exit_time


class StepCountTooSmall(IGError):
    pass


class ShootingDiverged(IGError):
    """Raised when damped Newton shooting fails.

    ``indices`` lists the failing rows of a batched solve and ``node_t`` the
    quadrature parameter of the failing node when the solve belongs to a
    path integral.
    """

    def __init__(self, message, indices=(), node_t=None):
        super().__init__(message)
        self.indices = tuple(indices)
        self.node_t = node_t


class CurveInvalid(IGError, ValueError):
    pass


class LevelSetNotFound(IGError):
    pass


class LevelCurveTraceFailed(IGError):
    pass
