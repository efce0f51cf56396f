"""Exception types raised across the package."""


class CsonoError(Exception):
    """Base class for all csono errors."""


class IndexOutOfRange(CsonoError, IndexError):
    """Pixel or cell index outside the valid range."""


class InvalidArgument(CsonoError, ValueError):
    """Argument fails a documented precondition."""


class InvalidResolution(InvalidArgument):
    """Latitude-longitude resolution does not divide 180 degrees."""


class ResourceLimit(CsonoError):
    """Requested construction exceeds a hard size limit."""


class DegenerateDirection(InvalidArgument):
    """Direction vector too close to zero to normalize."""


class EmptyInput(InvalidArgument):
    """Operation requires at least one element."""


class EmptySubset(EmptyInput):
    """Per-voxel sample subset is empty."""


class ConfigMismatch(InvalidArgument):
    """Reconstruction configuration is internally inconsistent."""


class InvalidTrajectory(InvalidArgument):
    """Trajectory specification cannot produce distinct frames."""


class InvalidTensor(InvalidArgument):
    """Operation requires a tensor marked valid."""


class AllCellsEmpty(InvalidArgument):
    """Spherical model has no non-empty cell."""


class DegenerateFrame(InvalidArgument):
    """Color-map main/reference directions are nearly parallel."""


class UnsupportedVolumeKind(CsonoError, TypeError):
    """Volume kind not supported by the requested operation."""


class ModeMismatch(InvalidArgument):
    """Slice extraction mode incompatible with the volume kind."""


class FormatError(CsonoError):
    """File content violates the on-disk format."""


class BadMagic(FormatError):
    """File does not start with the expected magic bytes."""


class TruncatedFile(FormatError):
    """File ends before the payload announced by its header."""


class InvalidPose(FormatError):
    """Stored rotation is not orthonormal within tolerance."""


class OutOfRangeIntensity(FormatError):
    """Stored intensity outside [0, 1]."""
