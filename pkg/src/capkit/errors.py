"""Exception hierarchy shared by all capkit modules."""


class CapkitError(Exception):
    """Base class for every error raised by capkit."""


# --- metric errors ---

class EmptyCorpus(CapkitError):
    """IDF statistics requested over zero documents."""


class NoReferences(CapkitError):
    """A sentence-level metric was called with an empty reference list."""


class MissingReference(CapkitError):
    """A hypothesis video id has no reference entry."""

    def __init__(self, video_id: str):
        super().__init__(f"no references for video id {video_id!r}")
        self.video_id = video_id


class MissingInput(CapkitError):
    """Corpus evaluation was given an empty hypothesis set."""


# --- feature pipeline errors ---

class NonPositiveDuration(CapkitError):
    """Clip scheduling needs a strictly positive video duration."""


class EmptyFeatureList(CapkitError):
    """Fusion needs at least one feature sequence."""


# --- ensemble errors ---

class VocabMismatch(CapkitError):
    """Models in one ensemble must share a single vocabulary."""


class InvalidDistribution(CapkitError):
    """A step distribution is not a probability vector."""


class EmptyCandidateSet(CapkitError):
    """Consensus selection over zero candidates."""


class EmptyPool(CapkitError):
    """Pool IDF requested over zero candidate sets."""


class VideoIdMismatch(CapkitError):
    """Inputs that must cover the same video ids do not."""


# --- toy captioner errors ---

class ShapeMismatch(CapkitError):
    """Parameter or input shapes are inconsistent."""


class EmptyDataset(CapkitError):
    """Training requested on an empty dataset."""


class EmptyBatch(CapkitError):
    """A policy-gradient update requested on an empty batch."""


# --- file format errors ---

class ParseError(CapkitError):
    """A text record could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateVideoId(CapkitError):
    """The same video id appears twice in one file."""

    def __init__(self, video_id: str, line: int | None = None):
        at = f" at line {line}" if line is not None else ""
        super().__init__(f"duplicate video id {video_id!r}{at}")
        self.video_id = video_id
        self.line = line


class BadMagic(CapkitError):
    """A binary file does not start with the expected magic bytes."""


class TruncatedFile(CapkitError):
    """A binary file ends before its header says it should."""


class NonFiniteValue(CapkitError):
    """A feature value is NaN or infinite."""


class DistributionNotNormalized(CapkitError):
    """A stored probability vector does not sum to 1."""


class TraceExhausted(CapkitError):
    """A replayed model was stepped past its recorded distributions."""
