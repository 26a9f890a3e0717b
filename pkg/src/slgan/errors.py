"""Exception types shared across the package."""


class SlganError(Exception):
    """Base class for all package-specific errors."""


# --- dataset ---------------------------------------------------------------

class MissingDirectory(SlganError):
    """Dataset root does not follow the required directory layout."""


class OrphanImage(SlganError):
    """An indexed image has no matching parsing map."""


class DecodeError(SlganError):
    """An image file could not be decoded."""


class NonRGBInput(SlganError):
    """Decoded image does not have exactly three channels."""


class UnknownLabel(SlganError):
    """Parsing map contains a label id outside the 19-class convention."""


class OutOfBoundsLandmark(SlganError):
    """Landmark coordinate falls outside the image bounds."""


class EmptyDomain(SlganError):
    """Batch sampling requested from a domain with no images."""


# --- networks / tensors ----------------------------------------------------

class ShapeMismatch(SlganError):
    """Tensor shapes are inconsistent with the operation's contract."""


class ChannelMismatch(ShapeMismatch):
    """Per-channel parameter vectors do not match the feature channel count."""


class DimensionMismatch(SlganError):
    """Vector dimensions disagree."""


# Shorter alias used by the style-interpolation API.
DimMismatch = DimensionMismatch


class StyleDimMismatch(DimensionMismatch):
    """Style code dimension does not match the decoder's affine heads."""


# --- numerics --------------------------------------------------------------

class EmptyPopulation(SlganError):
    """Histogram matching requires non-empty value populations."""


class NonFiniteLoss(SlganError):
    """A loss value became NaN or infinite; the training step is aborted."""


class WeightSumViolation(SlganError):
    """Interpolation weights are negative or do not sum to one."""


# --- configuration / persistence -------------------------------------------

class InvalidConfig(SlganError):
    """Training configuration violates a documented constraint."""


class CorruptCheckpoint(SlganError):
    """Checkpoint content hash does not match the stored payload."""


class VersionMismatch(SlganError):
    """Checkpoint format version or config hash is incompatible."""


class BundleNotLoaded(SlganError):
    """The inference service has no model bundle to serve."""
