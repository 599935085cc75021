"""Exception hierarchy shared by all paak modules."""


class PaakError(Exception):
    """Base class for every error raised by paak."""


class FormatError(PaakError):
    """A file or array does not follow the expected layout."""


class ValidationError(PaakError):
    """Input is well formed but violates a semantic constraint."""


class StructuralError(PaakError):
    """An object cannot be built from the given parts (empty mesh, shape mismatch)."""


class ResourceError(PaakError):
    """A request would exceed a configured resource limit."""


class NoDominantClass(PaakError):
    """Every semantic label in a feature map is the floor class."""


class TrainingDivergedError(PaakError):
    """Training produced a non-finite loss."""
