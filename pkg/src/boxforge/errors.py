"""Exception taxonomy shared across the package."""


class BoxforgeError(Exception):
    """Base class for all library errors."""


class DegenerateBoxError(BoxforgeError):
    """A box violates the strictly-positive-area invariant."""


class ZeroVectorError(BoxforgeError):
    """Cosine similarity was asked for a (near-)zero vector."""


class OutOfBoundsError(BoxforgeError):
    """A cell rectangle leaves its feature map."""


class WindowTooLargeError(BoxforgeError):
    """A query window fits no pyramid level."""


class EmptyDatasetError(BoxforgeError):
    """Mining requires at least one image with proposals."""


class NoPositivesError(BoxforgeError):
    """Region selection produced an empty positive set."""


class NoFramesError(BoxforgeError):
    """Frame sampling produced no frames to match against."""


class NoPointsError(BoxforgeError):
    """Mean-shift requires at least one vote point."""


class EmptyPoolError(BoxforgeError):
    """Minibatch sampling was asked to draw from an empty pool."""


class DimensionMismatchError(BoxforgeError):
    """Feature dimensions disagree."""


class NoGroundTruthError(BoxforgeError):
    """Evaluation requires ground-truth boxes."""


class NoPositiveImagesError(BoxforgeError):
    """CorLoc requires at least one positive image."""


class ConfigInvalidError(BoxforgeError):
    """Configuration violates its invariants."""


class MissingInputError(BoxforgeError):
    """A required input file does not exist."""


class StageFailureError(BoxforgeError):
    """A pipeline stage failed; wraps the underlying error."""


class IoFailureError(BoxforgeError):
    """A filesystem write failed."""
