"""Exception hierarchy shared by all modules."""


class WiretrackError(Exception):
    """Base class for every error raised by this package."""


# geometry
class NonPositiveDepthError(WiretrackError):
    pass


class NoConvergenceError(WiretrackError):
    pass


class LogNearPiError(WiretrackError):
    pass


# wiremodel
class ModelParseError(WiretrackError):
    pass


class IndexOutOfRangeError(ModelParseError):
    pass


class NonPlanarFaceError(ModelParseError):
    pass


class DegenerateFaceError(ModelParseError):
    pass


class EmptyProfileError(WiretrackError):
    """No visible model edge survives projection and clipping."""


# lsd
class ImageTooSmallError(WiretrackError):
    pass


class ImageFormatError(WiretrackError):
    pass


# estimate
class InsufficientPointsError(WiretrackError):
    pass


class DegenerateConfigurationError(WiretrackError):
    pass


class DivergedBehindCameraError(WiretrackError):
    pass


class NotEnoughMatchesError(WiretrackError):
    pass


class NoConsensusError(WiretrackError):
    pass


# tracker
class InitializationFailedError(WiretrackError):
    pass


# calibrate
class InsufficientViewsError(WiretrackError):
    pass


class DegenerateMotionError(WiretrackError):
    pass


# simulate
class LookAtDegenerateError(WiretrackError):
    pass


class LengthMismatchError(WiretrackError):
    pass


# cli
class ConfigError(WiretrackError):
    pass


class SchemaError(WiretrackError):
    pass
