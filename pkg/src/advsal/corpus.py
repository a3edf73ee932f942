"""Deterministic synthetic speaker corpus.

Speaker identity is carried by a fundamental frequency and three formant
resonators; utterances of one speaker differ by pitch wobble, small
formant drift, and additive noise. Everything is a pure function of
(corpus_seed, speaker_id, utterance_id), so the corpus is reproducible
byte-for-byte and individual utterances can be synthesized in any order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio import Waveform
from .errors import InvalidArguments, UnknownUtterance
from .validation import SAMPLE_RATE

SPLITS = ("train-target", "train-attack", "test")

F0_RANGE = (85.0, 295.0)
FORMANT_RANGES = ((300.0, 850.0), (1000.0, 2200.0), (2400.0, 3500.0))
BANDWIDTH_RANGES = ((60.0, 150.0), (80.0, 200.0), (100.0, 250.0))

PEAK_LEVEL = 0.9
NOISE_RMS_FRACTION = 0.02
F0_UTTERANCE_DRIFT = 0.03
F0_WOBBLE_DEPTH = 0.02
FORMANT_UTTERANCE_DRIFT = 0.015


@dataclass(frozen=True)
class SpeakerProfile:
    speaker_id: int
    f0: float
    formants: tuple[tuple[float, float], ...]  # (center_hz, bandwidth_hz) x3
    jitter_seed: int


@dataclass(frozen=True)
class UtteranceRecord:
    speaker_id: int
    utterance_id: int
    duration_s: float
    split: str


@dataclass(frozen=True)
class CorpusManifest:
    corpus_seed: int
    sample_rate: int
    speakers: tuple[SpeakerProfile, ...]
    utterances: tuple[UtteranceRecord, ...]

    def speaker(self, speaker_id: int) -> SpeakerProfile:
        for p in self.speakers:
            if p.speaker_id == speaker_id:
                return p
        raise UnknownUtterance(f"speaker {speaker_id} not in manifest")

    def utterance(self, speaker_id: int, utterance_id: int) -> UtteranceRecord:
        for u in self.utterances:
            if u.speaker_id == speaker_id and u.utterance_id == utterance_id:
                return u
        raise UnknownUtterance(f"utterance ({speaker_id}, {utterance_id}) not in manifest")

    def split_utterances(self, split: str, speaker_ids=None) -> tuple[UtteranceRecord, ...]:
        if split not in SPLITS:
            raise InvalidArguments(f"unknown split {split!r}, expected one of {SPLITS}")
        keep = None if speaker_ids is None else set(int(s) for s in speaker_ids)
        return tuple(
            u for u in self.utterances
            if u.split == split and (keep is None or u.speaker_id in keep)
        )


def _speaker_profile(corpus_seed: int, speaker_id: int) -> SpeakerProfile:
    rng = np.random.default_rng([int(corpus_seed), int(speaker_id), 0xA5])
    f0 = float(rng.uniform(*F0_RANGE))
    formants = tuple(
        (float(rng.uniform(*fr)), float(rng.uniform(*br)))
        for fr, br in zip(FORMANT_RANGES, BANDWIDTH_RANGES)
    )
    jitter_seed = int(rng.integers(0, 2**31 - 1))
    return SpeakerProfile(speaker_id=speaker_id, f0=f0, formants=formants, jitter_seed=jitter_seed)


def _split_counts(utts_per_speaker: int) -> tuple[int, int, int]:
    n_tt = max(1, round(0.7 * utts_per_speaker))
    n_ta = max(1, round(0.2 * utts_per_speaker))
    n_te = utts_per_speaker - n_tt - n_ta
    while n_te < 1:
        if n_tt >= n_ta:
            n_tt -= 1
        else:
            n_ta -= 1
        n_te += 1
    return n_tt, n_ta, n_te


def make_corpus(
    n_speakers: int,
    utts_per_speaker: int,
    duration_s: float,
    corpus_seed: int,
    sample_rate: int = SAMPLE_RATE,
) -> CorpusManifest:
    """Build a manifest with a ~70/20/10 per-speaker split (at least 1 each)."""
    if n_speakers < 2:
        raise InvalidArguments(f"n_speakers must be >= 2, got {n_speakers}")
    if utts_per_speaker < 3:
        raise InvalidArguments(f"utts_per_speaker must be >= 3, got {utts_per_speaker}")
    if duration_s < 0.5:
        raise InvalidArguments(f"duration_s must be >= 0.5, got {duration_s}")

    speakers = tuple(_speaker_profile(corpus_seed, sid) for sid in range(1, n_speakers + 1))
    n_tt, n_ta, _ = _split_counts(utts_per_speaker)

    utterances = []
    next_id = 1
    for sid in range(1, n_speakers + 1):
        for j in range(utts_per_speaker):
            if j < n_tt:
                split = "train-target"
            elif j < n_tt + n_ta:
                split = "train-attack"
            else:
                split = "test"
            utterances.append(
                UtteranceRecord(
                    speaker_id=sid,
                    utterance_id=next_id,
                    duration_s=float(duration_s),
                    split=split,
                )
            )
            next_id += 1

    return CorpusManifest(
        corpus_seed=int(corpus_seed),
        sample_rate=int(sample_rate),
        speakers=speakers,
        utterances=tuple(utterances),
    )


def _resonator_coefficients(center_hz: float, bandwidth_hz: float, sample_rate: int):
    # Klatt-style two-pole resonator, unity gain at DC.
    t = 1.0 / sample_rate
    r = np.exp(-np.pi * bandwidth_hz * t)
    b = 2.0 * r * np.cos(2.0 * np.pi * center_hz * t)
    c = -(r * r)
    a = 1.0 - b - c
    return np.array([a]), np.array([1.0, -b, -c])


def synthesize(manifest: CorpusManifest, speaker_id: int, utterance_id: int) -> Waveform:
    """Source-filter synthesis of one utterance, peak-normalized to 0.9."""
    record = manifest.utterance(speaker_id, utterance_id)
    profile = manifest.speaker(speaker_id)
    sr = manifest.sample_rate
    n = int(round(record.duration_s * sr))
    rng = np.random.default_rng(
        [manifest.corpus_seed, profile.jitter_seed, int(utterance_id), 0xC3]
    )

    # Per-utterance pitch: constant offset plus a slow random wobble.
    f0_base = profile.f0 * (1.0 + F0_UTTERANCE_DRIFT * rng.uniform(-1.0, 1.0))
    n_knots = max(4, int(record.duration_s * 8))
    knots = rng.uniform(-1.0, 1.0, size=n_knots)
    wobble = np.interp(np.linspace(0.0, n_knots - 1.0, n), np.arange(n_knots), knots)
    f0_track = f0_base * (1.0 + F0_WOBBLE_DEPTH * wobble)

    # Glottal source: impulse train from accumulated phase.
    phase = np.cumsum(f0_track / sr) + rng.uniform(0.0, 1.0)
    excitation = np.zeros(n)
    excitation[np.diff(np.floor(phase), prepend=np.floor(phase[0])) > 0] = 1.0

    # Cascade formant resonators with small per-utterance drift.
    voiced = excitation
    for center, bandwidth in profile.formants:
        center_u = center * (1.0 + FORMANT_UTTERANCE_DRIFT * rng.uniform(-1.0, 1.0))
        b, a = _resonator_coefficients(center_u, bandwidth, sr)
        voiced = lfilter(b, a, voiced)

    rms = np.sqrt(np.mean(voiced**2))
    noise = rng.normal(0.0, 1.0, size=n) * (NOISE_RMS_FRACTION * rms)
    signal = voiced + noise

    peak = np.abs(signal).max()
    if peak > 0:
        signal = signal * (PEAK_LEVEL / peak)
    return Waveform(signal, sr)


def load_split(manifest: CorpusManifest, split: str, speaker_ids=None):
    """Synthesize one split as (X, y, utterance_ids) with X of shape (n, length)."""
    records = manifest.split_utterances(split, speaker_ids)
    if not records:
        return np.zeros((0, 0)), np.zeros(0, dtype=int), []
    rows = [synthesize(manifest, u.speaker_id, u.utterance_id).samples for u in records]
    lengths = {r.size for r in rows}
    if len(lengths) != 1:
        raise InvalidArguments("split contains utterances of different lengths")
    X = np.stack(rows)
    y = np.array([u.speaker_id for u in records], dtype=int)
    ids = [u.utterance_id for u in records]
    return X, y, ids


def save_manifest(manifest: CorpusManifest, path, extra: dict | None = None) -> None:
    doc = {
        "corpus_seed": manifest.corpus_seed,
        "sample_rate": manifest.sample_rate,
        "speakers": [
            {
                "speaker_id": p.speaker_id,
                "f0": p.f0,
                "formants": [list(f) for f in p.formants],
                "jitter_seed": p.jitter_seed,
            }
            for p in manifest.speakers
        ],
        "utterances": [
            {
                "speaker_id": u.speaker_id,
                "utterance_id": u.utterance_id,
                "duration_s": u.duration_s,
                "split": u.split,
            }
            for u in manifest.utterances
        ],
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_manifest(path) -> CorpusManifest:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    speakers = tuple(
        SpeakerProfile(
            speaker_id=int(p["speaker_id"]),
            f0=float(p["f0"]),
            formants=tuple((float(c), float(b)) for c, b in p["formants"]),
            jitter_seed=int(p["jitter_seed"]),
        )
        for p in doc["speakers"]
    )
    utterances = tuple(
        UtteranceRecord(
            speaker_id=int(u["speaker_id"]),
            utterance_id=int(u["utterance_id"]),
            duration_s=float(u["duration_s"]),
            split=str(u["split"]),
        )
        for u in doc["utterances"]
    )
    return CorpusManifest(
        corpus_seed=int(doc["corpus_seed"]),
        sample_rate=int(doc["sample_rate"]),
        speakers=speakers,
        utterances=utterances,
    )
