"""Run configuration: JSON schema, validation, and artifact hashing.

A config is a JSON object with up to five sections. Validation rejects
unknown sections and keys, requires every seed explicitly, and reports
the offending key as a dotted path. Hashes over canonicalized config
subsets chain emitted artifacts to the exact settings that produced them.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .errors import ConfigError

_REQUIRED = object()


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return _is_int(v) or isinstance(v, float)


def _int_at_least(lo):
    return lambda v: _is_int(v) and v >= lo, f"an integer >= {lo}"


def _num_in(lo, hi, lo_open=False, hi_open=False):
    def check(v):
        if not _is_num(v):
            return False
        ok_lo = v > lo if lo_open else v >= lo
        ok_hi = v < hi if hi_open else v <= hi
        return ok_lo and ok_hi

    brackets = ("(" if lo_open else "[") + f"{lo}, {hi}" + (")" if hi_open else "]")
    return check, f"a number in {brackets}"


def _positive_num():
    return lambda v: _is_num(v) and v > 0, "a positive number"


def _one_of(*options):
    return lambda v: v in options, "one of " + ", ".join(repr(o) for o in options)


def _int_list():
    return (
        lambda v: isinstance(v, list) and len(v) >= 1 and all(_is_int(x) and x >= 1 for x in v),
        "a non-empty list of positive integers",
    )


def _str_list(allowed):
    return (
        lambda v: isinstance(v, list) and len(v) >= 1 and all(x in allowed for x in v),
        f"a non-empty list drawn from {sorted(allowed)}",
    )


def _bool():
    return lambda v: isinstance(v, bool), "a boolean"


def _optional(check_desc):
    check, desc = check_desc
    return lambda v: v is None or check(v), f"{desc} or null"


# Each field: (default or _REQUIRED, predicate, human description).
_SCHEMA = {
    "corpus": {
        "n_speakers": (_REQUIRED, *_int_at_least(2)),
        "utts_per_speaker": (_REQUIRED, *_int_at_least(3)),
        "duration_s": (_REQUIRED, *_num_in(0.5, 60.0)),
        "seed": (_REQUIRED, *_int_at_least(0)),
    },
    "target": {
        "d": (_REQUIRED, *_int_at_least(2)),
        "epochs": (_REQUIRED, *_int_at_least(1)),
        "lr": (_REQUIRED, *_positive_num()),
        "seed": (_REQUIRED, *_int_at_least(0)),
        "batch_size": (8, *_int_at_least(1)),
    },
    "osi": {
        "enrolled_speakers": (_REQUIRED, *_int_list()),
        "target_far": (_REQUIRED, *_num_in(0.0, 1.0)),
    },
    "attack": {
        "kind": (_REQUIRED, *_one_of("ssed", "fgsm", "bim", "cw")),
        "task": (_REQUIRED, *_one_of("csi", "osi")),
        "epsilon": (_REQUIRED, *_num_in(0.0, 1.0, lo_open=True)),
        "lambda_s": (_REQUIRED, *_num_in(0.0, 1e6)),
        "lambda_f": (_REQUIRED, *_num_in(0.0, 1e6)),
        "lambda_a": (_REQUIRED, *_num_in(0.0, 1e6)),
        "lambda_n": (_REQUIRED, *_num_in(0.0, 1e6)),
        "epochs": (_REQUIRED, *_int_at_least(1)),
        "lr": (_REQUIRED, *_positive_num()),
        "seed": (_REQUIRED, *_int_at_least(0)),
        "t": (_REQUIRED, *_int_at_least(1)),
        "batch_size": (8, *_int_at_least(1)),
        "use_saliency": (True, *_bool()),
        "symmetric_norm": (False, *_bool()),
        "iterations": (10, *_int_at_least(1)),
        "step": (None, *_optional(_positive_num())),
        "c": (1000.0, *_num_in(0.0, 1e6)),
        "steps": (100, *_int_at_least(1)),
        "kappa": (0.0, *_num_in(0.0, 1e6)),
    },
    "eval": {
        "splits": (["test"], *_str_list({"train-target", "train-attack", "test"})),
        "output_dir": (_REQUIRED, lambda v: isinstance(v, str) and v != "", "a non-empty string"),
    },
}

_FLOAT_KEYS = {
    "duration_s", "lr", "target_far", "epsilon", "lambda_s", "lambda_f",
    "lambda_a", "lambda_n", "step", "c", "kappa",
}


def validate_config(doc) -> dict:
    """Validate and normalize; returns a dict with all defaults filled in."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = sorted(set(doc) - set(_SCHEMA))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown config section")

    out = {}
    for section, fields in _SCHEMA.items():
        if section not in doc:
            continue
        raw = doc[section]
        if not isinstance(raw, dict):
            raise ConfigError(f"{section}: must be a JSON object")
        unknown = sorted(set(raw) - set(fields))
        if unknown:
            raise ConfigError(f"{section}.{unknown[0]}: unknown key")
        normalized = {}
        for key, (default, check, desc) in fields.items():
            if key in raw:
                value = raw[key]
            elif default is _REQUIRED:
                raise ConfigError(f"{section}.{key}: required key is missing")
            else:
                value = default
            if not check(value):
                raise ConfigError(f"{section}.{key}: expected {desc}, got {value!r}")
            if key in _FLOAT_KEYS and value is not None:
                value = float(value)
            normalized[key] = value
        out[section] = normalized

    if "attack" in out:
        a = out["attack"]
        if a["task"] == "osi" and "osi" not in out:
            raise ConfigError("osi: section is required when attack.task is 'osi'")
        if a["step"] is not None and a["step"] > a["epsilon"]:
            raise ConfigError("attack.step: must not exceed attack.epsilon")
        if "corpus" in out and a["t"] > out["corpus"]["n_speakers"]:
            raise ConfigError("attack.t: exceeds corpus.n_speakers")
    if "osi" in out:
        enrolled = out["osi"]["enrolled_speakers"]
        if len(set(enrolled)) != len(enrolled):
            raise ConfigError("osi.enrolled_speakers: duplicate speaker ids")
        if "corpus" in out and max(enrolled) > out["corpus"]["n_speakers"]:
            raise ConfigError("osi.enrolled_speakers: speaker id exceeds corpus.n_speakers")
    return out


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return validate_config(doc)


def require_sections(cfg: dict, *sections: str) -> None:
    for section in sections:
        if section not in cfg:
            raise ConfigError(f"{section}: section is required for this command")


def config_hash(cfg: dict, sections, extra: dict | None = None) -> str:
    """Stable hash over a subset of sections (plus optional extra fields)."""
    subset = {s: cfg[s] for s in sections if s in cfg}
    if extra:
        subset["_extra"] = extra
    blob = json.dumps(subset, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def manifest_hash(cfg: dict) -> str:
    return config_hash(cfg, ["corpus"])


def target_hash(cfg: dict) -> str:
    return config_hash(cfg, ["corpus", "target"])


def enrollment_hash(cfg: dict) -> str:
    task = cfg["attack"]["task"]
    extra = {"task": task}
    sections = ["corpus", "target", "osi"] if task == "osi" else ["corpus", "target"]
    return config_hash(cfg, sections, extra)


def attacker_hash(cfg: dict) -> str:
    task = cfg["attack"]["task"]
    sections = ["corpus", "target", "attack"]
    if task == "osi":
        sections.append("osi")
    return config_hash(cfg, sections)
