"""Exception hierarchy shared across the package."""


class AutostyleError(Exception):
    """Base class for every error raised by this package."""


# image I/O
class ImageNotFound(AutostyleError, FileNotFoundError):
    pass


class UnsupportedFormat(AutostyleError):
    pass


class CorruptImage(AutostyleError):
    pass


class InvalidFormat(AutostyleError, ValueError):
    pass


class ImageWriteError(AutostyleError, OSError):
    pass


# numerics
class DegenerateLuminance(AutostyleError):
    """Raised when the luminance plane has no spread to stretch."""


class NotSymmetric(AutostyleError, ValueError):
    pass


class NegativeEigenvalue(AutostyleError, ValueError):
    pass


class SingularCovariance(AutostyleError, ArithmeticError):
    pass


# catalog / index
class DimensionMismatch(AutostyleError, ValueError):
    pass


class CorruptFeatureFile(AutostyleError):
    pass


class MissingEntry(AutostyleError, KeyError):
    pass


class TooFewPoints(AutostyleError, ValueError):
    pass


class IndexIOError(AutostyleError, OSError):
    pass


class CorruptIndex(AutostyleError):
    pass


class VersionMismatch(CorruptIndex):
    pass


class ChecksumMismatch(CorruptIndex):
    pass


class UnknownCluster(AutostyleError, KeyError):
    pass
