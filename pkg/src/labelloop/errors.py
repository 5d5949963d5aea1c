"""Exception types shared across the toolkit."""


class LabelLoopError(Exception):
    """Base class for all errors raised by this package."""


# -- audio ------------------------------------------------------------------

class UnsupportedFormat(LabelLoopError):
    """WAV file uses a compression code or sample layout we do not read."""


class CorruptHeader(LabelLoopError):
    """RIFF chunk sizes are inconsistent with the file length."""


# -- features ---------------------------------------------------------------

class AudioTooShort(LabelLoopError):
    """Audio is shorter than a single analysis window."""


class CacheCorrupt(LabelLoopError):
    """Cached feature file header disagrees with its payload."""


# -- annotations ------------------------------------------------------------

class EmptyAnnotation(LabelLoopError):
    """Operation requires at least one labeled segment."""


class InvalidAnnotation(LabelLoopError):
    """Annotation violates the data model (overlaps, unknown class ids, ...)."""


# -- learner ----------------------------------------------------------------

class DegenerateData(LabelLoopError):
    """Training data collapses to fewer than two classes."""


class NonFinite(LabelLoopError):
    """Feature values overflow to inf or NaN."""


class DimensionMismatch(LabelLoopError):
    """Feature dimension does not match the model."""


# -- engine -----------------------------------------------------------------

class UnfinishedAnnotation(LabelLoopError):
    """Pool training was handed sessions whose annotations are not finished."""

    def __init__(self, sessions):
        self.sessions = list(sessions)
        super().__init__(
            "annotations not finished for sessions: " + ", ".join(map(str, self.sessions))
        )


# -- metrics / simulation ---------------------------------------------------

class LengthMismatch(LabelLoopError):
    """Two frame sequences do not share a grid."""


class SingleClass(LabelLoopError):
    """AUC is undefined because no class has both positives and negatives."""


class ZeroVariance(LabelLoopError):
    """Cronbach's alpha is undefined when total scores do not vary."""


class InvalidRange(LabelLoopError):
    """Simulation split parameters are out of range."""


# -- store / service --------------------------------------------------------

class StoreError(LabelLoopError):
    """Base class for store failures."""


class Forbidden(StoreError):
    """Principal lacks the right to perform this operation."""


class Locked(StoreError):
    """Annotation is locked against non-admin writes."""


class MissingReference(StoreError):
    """Document references an entity that does not exist."""


class NotFound(StoreError):
    """No document with this id."""


class ValidationError(StoreError):
    """Job or document parameters fail validation."""


class JobNotFound(StoreError):
    """Unknown job id."""
