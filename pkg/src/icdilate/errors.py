"""Exception hierarchy shared by all icdilate modules."""


class IcdilateError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(IcdilateError):
    """Tensor shapes are inconsistent with each other or with an operation."""


class GeometryError(IcdilateError):
    """Convolution hyper-parameters produce an impossible geometry."""


class PropagationError(IcdilateError):
    """A channel permutation cannot be absorbed by a successor layer."""


class ContainerError(IcdilateError):
    """Base class for weight-container parsing and validation failures."""


class BadMagic(ContainerError):
    """File does not start with the container magic bytes."""


class BadVersion(ContainerError):
    """Container format version is not supported."""


class TruncatedBlob(ContainerError):
    """A declared tensor blob extends past the end of the file."""


class HeaderError(ContainerError):
    """Container header is malformed or internally inconsistent."""


class EnumerationGuard(IcdilateError):
    """Joint search space is too large to enumerate exhaustively."""


class VerificationFailure(IcdilateError):
    """An equivalence or oracle check failed; message names the site."""
