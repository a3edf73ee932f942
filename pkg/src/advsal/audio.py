"""Waveform type, power/SNR arithmetic, and 16-bit PCM WAV I/O.

All attacks in this package operate on mono waveforms with samples in
[-1, 1] at the canonical 16 kHz rate. Power is the mean of squared
samples so that SNR is invariant to utterance length.
"""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidArguments,
    IOFailure,
    LengthMismatch,
    UnsupportedFormat,
    ZeroPerturbation,
)
from .validation import SAMPLE_RATE, as_signal_array

PCM_FULL_SCALE = 32767  # symmetric scaling keeps write->read error below 2**-15


@dataclass(frozen=True)
class Waveform:
    """Mono audio samples plus a sample rate in Hz.

    The container admits any finite amplitudes so intermediate signals
    (an unclipped x + delta) stay representable; valid audio for playback
    and WAV export is [-1, 1], restored by clip() and enforced by
    write_wav().
    """

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        arr = as_signal_array(self.samples)
        object.__setattr__(self, "samples", arr)
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be > 0, got {self.sample_rate}")
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


def _samples_of(v) -> np.ndarray:
    if isinstance(v, Waveform):
        return v.samples
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise LengthMismatch(f"expected a 1-D signal, got shape {arr.shape}")
    return arr


def power(w) -> float:
    """Mean squared sample amplitude of a waveform or plain signal."""
    return float(np.mean(np.square(_samples_of(w))))


def snr_db(x, delta) -> float:
    """10*log10 of clean power over perturbation power.

    delta may be a plain array; unlike audio it is not confined to [-1, 1].
    Raises ZeroPerturbation for an all-zero delta so callers can treat the
    attack as a no-op instead of propagating +inf into report means.
    """
    xs, ds = _samples_of(x), _samples_of(delta)
    if xs.size != ds.size:
        raise LengthMismatch(f"x has length {xs.size}, delta has length {ds.size}")
    p_delta = power(ds)
    if p_delta == 0.0:
        raise ZeroPerturbation("perturbation is identically zero; SNR undefined")
    return 10.0 * math.log10(power(xs) / p_delta)


def clip(w: Waveform) -> Waveform:
    """Clamp samples to [-1, 1]; length and sample rate unchanged."""
    return Waveform(np.clip(w.samples, -1.0, 1.0), w.sample_rate)


def write_wav(path, w: Waveform) -> None:
    """Write mono 16-bit little-endian PCM. Samples must lie in [-1, 1]."""
    if np.abs(w.samples).max() > 1.0:
        raise InvalidArguments("samples outside [-1, 1]; clip() before writing")
    pcm = np.round(w.samples * PCM_FULL_SCALE).astype("<i2")
    try:
        with wave.open(str(path), "wb") as f:
            f.setnchannels(1)
            f.setsampwidth(2)
            f.setframerate(w.sample_rate)
            f.writeframes(pcm.tobytes())
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc


def read_wav(path) -> Waveform:
    """Read a mono 16-bit PCM WAV written by write_wav (or equivalent).

    Samples are scaled by 1/32767 and clamped so that the lone -32768 code
    still maps inside [-1, 1].
    """
    try:
        with wave.open(str(path), "rb") as f:
            channels = f.getnchannels()
            width = f.getsampwidth()
            rate = f.getframerate()
            frames = f.readframes(f.getnframes())
    except wave.Error as exc:
        raise UnsupportedFormat(f"{path}: {exc}") from exc
    except OSError as exc:
        raise IOFailure(f"cannot read {path}: {exc}") from exc
    if channels != 1:
        raise UnsupportedFormat(f"{path}: expected mono, got {channels} channels")
    if width != 2:
        raise UnsupportedFormat(f"{path}: expected 16-bit samples, got {8 * width}-bit")
    pcm = np.frombuffer(frames, dtype="<i2")
    samples = np.clip(pcm.astype(np.float64) / PCM_FULL_SCALE, -1.0, 1.0)
    return Waveform(samples, rate)
