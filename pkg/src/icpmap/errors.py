"""Exception types raised across the toolkit."""


class IcpMapError(Exception):
    """Base class for all toolkit errors."""


class DegenerateCovarianceError(IcpMapError):
    """A covariance matrix is singular or not positive definite."""


class DegenerateConstraintsError(IcpMapError):
    """The constraint set leaves part of the pose unconstrained."""

    def __init__(self, message, free_directions=()):
        super().__init__(message)
        self.free_directions = tuple(free_directions)


class EmptyOverlapError(IcpMapError):
    """No usable matches between scan and reference map."""


class EmptyCloudError(IcpMapError):
    """An operation that needs points received an empty cloud."""


class InsufficientMotionError(IcpMapError):
    """The trajectory does not move enough to observe the quantity."""


class ConfigError(IcpMapError):
    """A configuration or scenario file could not be parsed."""


class SensorCsvError(IcpMapError):
    """A sensor CSV file is malformed."""


class PlyError(IcpMapError):
    """Base class for PLY file errors."""


class PlyFormatError(PlyError):
    """Malformed PLY header or body."""


class PlyTruncatedError(PlyError):
    """PLY body ends before the advertised element count."""


class PlyUnsupportedError(PlyError):
    """PLY uses a property or element type this reader does not support."""
