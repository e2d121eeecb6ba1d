"""Exception types raised across the package."""


class HubttaError(Exception):
    """Base class for all package-specific errors."""


class ZeroNormRow(HubttaError):
    """A row that should be normalizable has (near-)zero Euclidean norm."""

    def __init__(self, index: int):
        self.index = index
        super().__init__(f"row {index} has zero norm and cannot be normalized")


class DimensionMismatch(HubttaError):
    """Operands disagree on the embedding dimension."""


class NonFiniteInput(HubttaError):
    """Input contains NaN or infinite entries."""


class GalleryMismatch(HubttaError):
    """Similarity matrices disagree on the gallery size."""


class InsufficientSamples(HubttaError):
    """Too few samples for a covariance-style statistic."""


class BadK(HubttaError):
    """Neighborhood size k outside [1, n_gallery]."""


class DegenerateMean(HubttaError):
    """Statistic undefined because the mean is not positive."""


class DegenerateSum(HubttaError):
    """Statistic undefined because the total mass is not positive."""


class MissingGroundTruth(HubttaError):
    """Ground-truth pairing absent or inconsistent with the rankings."""


class EmptyDataset(HubttaError):
    """Stream dataset contains no queries."""


class UnknownKind(HubttaError):
    """Unrecognized synthetic shift kind."""


class BadMagic(HubttaError):
    """Embedding file does not start with the expected magic bytes."""


class VersionUnsupported(HubttaError):
    """Embedding file declares an unsupported version or dtype code."""


class TruncatedPayload(HubttaError):
    """Embedding file payload length disagrees with its header."""


class ShapeOverflow(HubttaError):
    """Embedding file header declares an empty or implausibly large shape."""
