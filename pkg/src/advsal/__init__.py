"""Adversarial audio toolkit: saliency-gated generator attacks and
reference attacks against a small speaker identification system, with a
deterministic synthetic corpus and an evaluation harness.
"""

from .audio import Waveform, clip, power, read_wav, snr_db, write_wav
from .baselines import (
    CarliniWagnerL2Attack,
    CleanPassThrough,
    FastGradientSignAttack,
    IterativeGradientSignAttack,
)
from .corpus import (
    CorpusManifest,
    SpeakerProfile,
    UtteranceRecord,
    load_manifest,
    load_split,
    make_corpus,
    save_manifest,
    synthesize,
)
from .errors import (
    AdvsalError,
    ConfigError,
    EmptyInput,
    InputTooShort,
    InsufficientData,
    InvalidArguments,
    InvalidTarget,
    IOFailure,
    LengthMismatch,
    NotFitted,
    UnknownSpeaker,
    UnknownUtterance,
    UnsupportedFormat,
    ZeroPerturbation,
)
from .evaluate import (
    AblationResult,
    AttackReport,
    ReportRow,
    SweepResult,
    evaluate_attack,
    export_spectrogram,
    run_ablation_angular,
    run_ablation_saliency,
    save_report,
    save_spectrogram,
    save_sweep,
    sweep_hyperparameter,
    tasr,
)
from .ssed import AttackOutput, SaliencyEncoderDecoderAttack, load_attacker, save_attacker
from .target import (
    REJECT,
    EnrollmentDB,
    SpeakerEncoder,
    TargetSystem,
    calibrate_threshold,
    decide_csi,
    decide_osi,
    enroll,
    load_encoder,
    load_enrollment,
    save_encoder,
    save_enrollment,
    score,
)
from .validation import SAMPLE_RATE

__version__ = "0.1.0"

__all__ = [
    "AblationResult",
    "AdvsalError",
    "AttackOutput",
    "AttackReport",
    "CarliniWagnerL2Attack",
    "CleanPassThrough",
    "ConfigError",
    "CorpusManifest",
    "EmptyInput",
    "EnrollmentDB",
    "FastGradientSignAttack",
    "IOFailure",
    "InputTooShort",
    "InsufficientData",
    "InvalidArguments",
    "InvalidTarget",
    "IterativeGradientSignAttack",
    "LengthMismatch",
    "NotFitted",
    "REJECT",
    "ReportRow",
    "SAMPLE_RATE",
    "SaliencyEncoderDecoderAttack",
    "SpeakerEncoder",
    "SpeakerProfile",
    "SweepResult",
    "TargetSystem",
    "UnknownSpeaker",
    "UnknownUtterance",
    "UnsupportedFormat",
    "UtteranceRecord",
    "Waveform",
    "ZeroPerturbation",
    "calibrate_threshold",
    "clip",
    "decide_csi",
    "decide_osi",
    "enroll",
    "evaluate_attack",
    "export_spectrogram",
    "load_attacker",
    "load_encoder",
    "load_enrollment",
    "load_manifest",
    "load_split",
    "make_corpus",
    "power",
    "read_wav",
    "run_ablation_angular",
    "run_ablation_saliency",
    "save_attacker",
    "save_encoder",
    "save_enrollment",
    "save_manifest",
    "save_report",
    "save_spectrogram",
    "save_sweep",
    "score",
    "snr_db",
    "sweep_hyperparameter",
    "synthesize",
    "tasr",
    "write_wav",
]
