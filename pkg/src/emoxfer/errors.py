"""Exception types shared across the package."""


class EmoxferError(Exception):
    """Base class for all package-specific errors."""


class DataError(EmoxferError):
    """Input data is malformed (non-finite samples, bad file contents)."""


class ShortInputError(DataError):
    """Audio or feature input is too short for the requested analysis."""


class AlignmentError(DataError):
    """Phoneme alignment is inconsistent with the acoustic frame count."""


class MissingStatsError(EmoxferError):
    """No prosody statistics are available for the requested speaker."""


class UnknownSpeakerError(EmoxferError):
    """Speaker ID not present in the lookup table or manifest."""


class LabelError(EmoxferError):
    """Emotion label outside the configured label range."""


class ConfigError(EmoxferError):
    """Run configuration is malformed (unknown keys, bad values)."""


class CheckpointError(EmoxferError):
    """Checkpoint file is missing sections or otherwise unreadable."""


class DivergenceError(EmoxferError):
    """Training produced a non-finite loss.

    Carries the loss breakdown that triggered the failure so the offending
    term can be identified.
    """

    def __init__(self, message, breakdown=None):
        super().__init__(message)
        self.breakdown = breakdown
