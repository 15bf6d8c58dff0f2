"""Exception types shared across the package.

Every contract violation gets its own class so callers (and tests) can
catch the exact failure instead of matching message strings.
"""


class ZsketchError(Exception):
    """Base class for all package errors."""


class StoreError(ZsketchError):
    """Base class for feature-store problems."""


class MissingFileError(StoreError):
    pass


class EmptyStoreError(StoreError):
    pass


class DimensionMismatchError(StoreError):
    pass


class UnknownModalityError(StoreError):
    pass


class NonFiniteValueError(StoreError):
    pass


class UnknownClassError(StoreError):
    pass


class SplitError(ZsketchError):
    """Bad seen/unseen partition request."""


class SemanticsError(ZsketchError):
    """Word-vector file or projection problems."""


class FeaturizerError(ZsketchError):
    """Unusable pixel input or empty image tree."""


class NetError(ZsketchError):
    """Bad batch shape or mode for the MLP machinery."""


class LossInputError(ZsketchError):
    """An enabled loss term was not given its inputs."""


class TripletBuildError(ZsketchError):
    """A seen class lacks instances in one of the modalities."""


class BatchingError(ZsketchError):
    """Not enough triplets of one anchor type for a balanced batch."""


class TrainingDivergedError(ZsketchError):
    """Total loss became NaN/Inf; carries the last finite report."""

    def __init__(self, message: str, last_report=None):
        super().__init__(message)
        self.last_report = last_report


class CheckpointError(ZsketchError):
    """Corrupt, truncated, or wrong-format model file."""


class VariantMismatchError(CheckpointError):
    """Checkpoint variant differs from what the caller expected."""


class RetrievalError(ZsketchError):
    """Empty gallery or otherwise unanswerable query."""


class ServiceError(ZsketchError):
    """Service configuration problems (fingerprint or featurizer mismatch)."""
