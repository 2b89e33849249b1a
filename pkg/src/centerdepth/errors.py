"""Exception types raised across the package."""


class CenterDepthError(Exception):
    """Base class for every error raised by centerdepth."""


# camera geometry
class BehindCamera(CenterDepthError, ValueError):
    pass


class NonPositiveDepth(CenterDepthError, ValueError):
    pass


class FullyBehindCamera(CenterDepthError, ValueError):
    pass


class DegenerateProjection(CenterDepthError, ValueError):
    pass


# scene synthesis / dataset io
class PlacementExhausted(CenterDepthError, RuntimeError):
    pass


class IoFailure(CenterDepthError, OSError):
    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)


class ManifestMissing(IoFailure):
    pass


class ChecksumMismatch(IoFailure):
    pass


class MalformedRaster(IoFailure):
    pass


# heatmap decoding
class CenterOutOfBounds(CenterDepthError, ValueError):
    pass


# crf
class LengthMismatch(CenterDepthError, ValueError):
    pass


class EmptyRegion(CenterDepthError, ValueError):
    pass


class UnarySourceMissing(CenterDepthError, ValueError):
    pass


class NotConverged(RuntimeWarning):
    """Coordinate descent hit ``max_iters`` before the energy drop fell below ``tol``."""


# evaluation
class EmptyInput(CenterDepthError, ValueError):
    pass


class OutOfBounds(CenterDepthError, IndexError):
    pass


class EmptyMask(CenterDepthError, ValueError):
    pass


# planning
class Unreachable(CenterDepthError, RuntimeError):
    pass


class InvalidEndpoint(CenterDepthError, ValueError):
    pass


# configuration
class ConfigError(CenterDepthError, ValueError):
    pass


class MalformedConfig(ConfigError):
    pass


class UnknownField(ConfigError):
    pass


class ValidationFailure(ConfigError):
    pass
