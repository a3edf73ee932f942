"""Exception types shared across the toolkit."""


class AdvsalError(Exception):
    """Base class for all toolkit errors."""


class LengthMismatch(AdvsalError):
    """Two sequences that must align elementwise have different lengths."""


class ZeroPerturbation(AdvsalError):
    """SNR requested for an all-zero perturbation; the attack was a no-op."""


class UnsupportedFormat(AdvsalError):
    """Audio file is not mono 16-bit PCM at the canonical sample rate."""


class IOFailure(AdvsalError):
    """Reading or writing an artifact failed at the OS level."""


class InvalidArguments(AdvsalError):
    """Arguments violate an operation's preconditions."""


class UnknownUtterance(AdvsalError):
    """Requested (speaker_id, utterance_id) is not in the manifest."""


class UnknownSpeaker(AdvsalError):
    """Requested speaker_id is not in the manifest or enrollment DB."""


class InsufficientData(AdvsalError):
    """Not enough utterances or speakers to run the operation."""


class InvalidTarget(AdvsalError):
    """Target speaker position is outside the enrollment DB."""


class EmptyInput(AdvsalError):
    """An aggregate was requested over an empty collection."""


class InputTooShort(AdvsalError):
    """Waveform is shorter than one analysis frame."""


class NotFitted(AdvsalError):
    """Estimator method that requires fit() was called before fit()."""


class ConfigError(AdvsalError):
    """Run configuration is malformed; message names the offending key."""
