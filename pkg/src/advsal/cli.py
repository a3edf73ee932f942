"""Command-line pipeline driver.

One subcommand per pipeline stage, all driven by a JSON config file.
Every artifact embeds the hash of the config sections that produced it,
and downstream commands refuse to consume artifacts whose hash does not
match the current config unless --force is given.

Exit codes: 0 success, 1 configuration or artifact validation error,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import config as cfgmod
from .audio import Waveform, write_wav
from .baselines import (
    CarliniWagnerL2Attack,
    FastGradientSignAttack,
    IterativeGradientSignAttack,
)
from .corpus import load_manifest, load_split, make_corpus, save_manifest, synthesize
from .errors import AdvsalError, ConfigError
from .evaluate import (
    evaluate_attack,
    run_ablation_angular,
    run_ablation_saliency,
    save_report,
    save_sweep,
    sweep_hyperparameter,
)
from .ssed import SaliencyEncoderDecoderAttack, load_attacker, save_attacker
from .target import (
    SpeakerEncoder,
    TargetSystem,
    calibrate_threshold,
    enroll,
    load_encoder,
    load_enrollment,
    save_encoder,
    save_enrollment,
)

LOCK_NAME = ".lock"


class UsageFailure(Exception):
    """Raised for validation problems after argument parsing; exits 1."""


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="advsal",
        description="Adversarial attacks on a speaker identification system.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        c = sub.add_parser(name, help=help_text)
        c.add_argument("--config", required=True, help="path to the JSON run config")
        c.add_argument("--output", help="output directory (overrides eval.output_dir)")
        c.add_argument("--seed", type=int, help="override the seed this command uses")
        c.add_argument("--force", action="store_true", help="ignore config hash mismatches")
        c.add_argument(
            "--workers",
            type=int,
            help="torch thread count (falls back to env ADVSAL_WORKERS)",
        )
        return c

    synth = add("synth", "synthesize the speaker corpus manifest")
    synth.add_argument("--export-wav", action="store_true", help="also write every utterance as WAV")
    add("train-target", "train the speaker embedding network")
    add("enroll", "build enrollment centroids for the configured task")
    add("calibrate", "calibrate the open-set rejection threshold")
    add("train-attack", "train the generator-based attacker")
    add("attack", "emit adversarial WAVs plus a per-utterance report")
    add("eval", "evaluate the configured attack into a report")

    ablate = add("ablate", "paired runs with one component removed")
    ablate.add_argument("--which", required=True, choices=("saliency", "angular"))
    ablate.add_argument("--seeds", help="comma-separated training seeds (default: 3 from attack.seed)")

    sweep = add("sweep", "train and evaluate across one hyperparameter grid")
    sweep.add_argument("--name", required=True, choices=("lambda_s", "lambda_f", "lambda_a", "lambda_n"))
    sweep.add_argument("--grid", required=True, help="comma-separated increasing values")
    sweep.add_argument("--seeds", help="comma-separated training seeds (default: 3 from attack.seed)")
    return p


_SEED_SECTION = {
    "synth": "corpus",
    "train-target": "target",
    "enroll": None,
    "calibrate": None,
    "train-attack": "attack",
    "attack": "attack",
    "eval": "attack",
    "ablate": "attack",
    "sweep": "attack",
}


def _resolve_workers(args) -> int | None:
    if args.workers is not None:
        value = args.workers
    elif os.environ.get("ADVSAL_WORKERS"):
        try:
            value = int(os.environ["ADVSAL_WORKERS"])
        except ValueError as exc:
            raise UsageFailure(f"ADVSAL_WORKERS must be an integer: {exc}") from exc
    else:
        return None
    if value < 1:
        raise UsageFailure(f"workers must be >= 1, got {value}")
    return value


def _output_dir(args, cfg: dict) -> Path:
    if args.output:
        return Path(args.output)
    if "eval" in cfg:
        return Path(cfg["eval"]["output_dir"])
    raise ConfigError("eval.output_dir: required unless --output is given")


def _require_file(path: Path, produced_by: str) -> Path:
    if not path.exists():
        raise UsageFailure(f"missing artifact {path} (run `advsal {produced_by}` first)")
    return path


def _check_hash(found: str | None, expected: str, path: Path, force: bool) -> None:
    if found == expected:
        return
    msg = f"{path}: produced by a different config (artifact hash {found}, expected {expected})"
    if force:
        print(f"warning: {msg}; continuing due to --force", file=sys.stderr)
    else:
        raise UsageFailure(msg + "; pass --force to use it anyway")


def _load_system(cfg: dict, outdir: Path, force: bool):
    """Load manifest + encoder + enrollment (+ threshold for OSI)."""
    cfgmod.require_sections(cfg, "corpus", "target", "attack")
    manifest_doc_path = _require_file(outdir / "manifest.json", "synth")
    manifest = load_manifest(manifest_doc_path)
    manifest_doc = json.loads(manifest_doc_path.read_text(encoding="utf-8"))
    _check_hash(manifest_doc.get("config_hash"), cfgmod.manifest_hash(cfg), manifest_doc_path, force)

    encoder_path = _require_file(outdir / "target.pt", "train-target")
    encoder, sidecar = load_encoder(encoder_path)
    _check_hash(sidecar.get("config_hash"), cfgmod.target_hash(cfg), encoder_path, force)

    enrollment_path = _require_file(outdir / "enrollment.json", "enroll")
    db, enroll_doc = load_enrollment(enrollment_path)
    _check_hash(enroll_doc.get("config_hash"), cfgmod.enrollment_hash(cfg), enrollment_path, force)

    task = cfg["attack"]["task"]
    theta = None
    if task == "osi":
        threshold_path = _require_file(outdir / "threshold.json", "calibrate")
        threshold_doc = json.loads(threshold_path.read_text(encoding="utf-8"))
        _check_hash(
            threshold_doc.get("config_hash"), cfgmod.enrollment_hash(cfg), threshold_path, force
        )
        theta = float(threshold_doc["theta"])
    system = TargetSystem(encoder=encoder, db=db, task=task, theta=theta)
    return manifest, system


def _attack_train_pool(manifest, target_speaker_id: int):
    """Attacker-side audio: the train-attack split minus the target's own voice."""
    speakers = [p.speaker_id for p in manifest.speakers if p.speaker_id != target_speaker_id]
    return load_split(manifest, "train-attack", speakers)


def _build_attacker(cfg: dict, outdir: Path, system: TargetSystem, force: bool):
    a = cfg["attack"]
    position = system.db.position_of(a["t"])
    if a["kind"] == "ssed":
        path = _require_file(outdir / "attacker.pt", "train-attack")
        attacker, sidecar = load_attacker(path, system)
        _check_hash(sidecar.get("config_hash"), cfgmod.attacker_hash(cfg), path, force)
        return attacker
    if a["kind"] == "fgsm":
        return FastGradientSignAttack(system, position, a["epsilon"]).fit()
    if a["kind"] == "bim":
        return IterativeGradientSignAttack(
            system, position, a["epsilon"], step=a["step"], iterations=a["iterations"]
        ).fit()
    return CarliniWagnerL2Attack(
        system, position, c=a["c"], steps=a["steps"], lr=a["lr"], kappa=a["kappa"]
    ).fit()


def _ssed_params(a: dict) -> dict:
    return {
        "epsilon": a["epsilon"],
        "lambda_s": a["lambda_s"],
        "lambda_a": a["lambda_a"],
        "lambda_f": a["lambda_f"],
        "lambda_n": a["lambda_n"],
        "epochs": a["epochs"],
        "lr": a["lr"],
        "batch_size": a["batch_size"],
        "use_saliency": a["use_saliency"],
        "symmetric_norm": a["symmetric_norm"],
    }


def _parse_seeds(text: str | None, base_seed: int) -> list[int]:
    if text is None:
        return [base_seed, base_seed + 1, base_seed + 2]
    try:
        seeds = [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise UsageFailure(f"--seeds must be comma-separated integers: {exc}") from exc
    if not seeds:
        raise UsageFailure("--seeds must name at least one seed")
    return seeds


def _cmd_synth(args, cfg: dict, outdir: Path) -> None:
    cfgmod.require_sections(cfg, "corpus")
    c = cfg["corpus"]
    manifest = make_corpus(c["n_speakers"], c["utts_per_speaker"], c["duration_s"], c["seed"])
    path = outdir / "manifest.json"
    save_manifest(manifest, path, extra={"config_hash": cfgmod.manifest_hash(cfg)})
    print(f"wrote {path} ({len(manifest.speakers)} speakers, {len(manifest.utterances)} utterances)")
    if args.export_wav:
        wav_dir = outdir / "wav"
        wav_dir.mkdir(exist_ok=True)
        for u in manifest.utterances:
            w = synthesize(manifest, u.speaker_id, u.utterance_id)
            write_wav(wav_dir / f"s{u.speaker_id:03d}_u{u.utterance_id:05d}.wav", w)
        print(f"wrote {len(manifest.utterances)} WAV files under {wav_dir}")


def _cmd_train_target(args, cfg: dict, outdir: Path) -> None:
    cfgmod.require_sections(cfg, "corpus", "target")
    manifest_path = _require_file(outdir / "manifest.json", "synth")
    manifest_doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    _check_hash(manifest_doc.get("config_hash"), cfgmod.manifest_hash(cfg), manifest_path, args.force)
    manifest = load_manifest(manifest_path)

    t = cfg["target"]
    X, y, _ = load_split(manifest, "train-target")
    encoder = SpeakerEncoder(
        embedding_dim=t["d"],
        epochs=t["epochs"],
        lr=t["lr"],
        batch_size=t["batch_size"],
        seed=t["seed"],
    ).fit(X, y)

    X_test, y_test, _ = load_split(manifest, "test")
    train_acc = _centroid_accuracy(encoder, X, y, X, y)
    test_acc = _centroid_accuracy(encoder, X, y, X_test, y_test)
    path = outdir / "target.pt"
    save_encoder(
        encoder,
        path,
        meta={
            "config_hash": cfgmod.target_hash(cfg),
            "train_accuracy": train_acc,
            "test_accuracy": test_acc,
        },
    )
    print(f"wrote {path} (train acc {train_acc:.3f}, test acc {test_acc:.3f})")


def _centroid_accuracy(encoder, X_enroll, y_enroll, X, y) -> float:
    from .target import decide_csi, score

    db = enroll(encoder, X_enroll, y_enroll)
    correct = 0
    for row, label in zip(X, y):
        position = decide_csi(score(encoder, db, row))
        if db.speaker_ids[position - 1] == label:
            correct += 1
    return correct / len(y)


def _cmd_enroll(args, cfg: dict, outdir: Path) -> None:
    cfgmod.require_sections(cfg, "corpus", "target", "attack")
    manifest_path = _require_file(outdir / "manifest.json", "synth")
    manifest = load_manifest(manifest_path)
    encoder_path = _require_file(outdir / "target.pt", "train-target")
    encoder, sidecar = load_encoder(encoder_path)
    _check_hash(sidecar.get("config_hash"), cfgmod.target_hash(cfg), encoder_path, args.force)

    task = cfg["attack"]["task"]
    if task == "osi":
        speaker_ids = cfg["osi"]["enrolled_speakers"]
    else:
        speaker_ids = [p.speaker_id for p in manifest.speakers]
    X, y, _ = load_split(manifest, "train-target", speaker_ids)
    db = enroll(encoder, X, y, speaker_ids)
    path = outdir / "enrollment.json"
    save_enrollment(
        db, path, meta={"config_hash": cfgmod.enrollment_hash(cfg), "task": task}
    )
    print(f"wrote {path} ({db.n_enrolled} speakers, task {task})")


def _cmd_calibrate(args, cfg: dict, outdir: Path) -> None:
    cfgmod.require_sections(cfg, "corpus", "target", "attack", "osi")
    if cfg["attack"]["task"] != "osi":
        raise ConfigError("attack.task: calibrate applies to the osi task only")
    manifest = load_manifest(_require_file(outdir / "manifest.json", "synth"))
    encoder, _sidecar = load_encoder(_require_file(outdir / "target.pt", "train-target"))
    enrollment_path = _require_file(outdir / "enrollment.json", "enroll")
    db, enroll_doc = load_enrollment(enrollment_path)
    _check_hash(enroll_doc.get("config_hash"), cfgmod.enrollment_hash(cfg), enrollment_path, args.force)

    enrolled = set(db.speaker_ids)
    imposters = [p.speaker_id for p in manifest.speakers if p.speaker_id not in enrolled]
    X, _y, _ids = load_split(manifest, "train-target", imposters)
    theta = calibrate_threshold(encoder, db, X, cfg["osi"]["target_far"])
    path = outdir / "threshold.json"
    path.write_text(
        json.dumps(
            {
                "theta": theta,
                "target_far": cfg["osi"]["target_far"],
                "n_imposter_utterances": int(X.shape[0]),
                "config_hash": cfgmod.enrollment_hash(cfg),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    print(f"wrote {path} (theta {theta:.6f})")


def _cmd_train_attack(args, cfg: dict, outdir: Path) -> None:
    a = cfg["attack"]
    if a["kind"] != "ssed":
        raise ConfigError(
            f"attack.kind: {a['kind']!r} needs no training; train-attack applies to 'ssed' only"
        )
    manifest, system = _load_system(cfg, outdir, args.force)
    position = system.db.position_of(a["t"])
    X, _y, _ids = _attack_train_pool(manifest, a["t"])
    attacker = SaliencyEncoderDecoderAttack(
        target_system=system, target=position, seed=a["seed"], **_ssed_params(a)
    ).fit(X)
    path = outdir / "attacker.pt"
    save_attacker(attacker, path, meta={"config_hash": cfgmod.attacker_hash(cfg)})
    final = attacker.loss_curve_[-1]["total"]
    print(f"wrote {path} (final training loss {final:.4f})")


def _emit_attack_wavs(report, manifest, attacker, wav_dir: Path) -> None:
    wav_dir.mkdir(exist_ok=True)
    for row in report.rows:
        if row.error is not None:
            continue
        w = synthesize(manifest, row.source_speaker, row.utterance_id)
        out = attacker.attack(w)
        write_wav(wav_dir / f"u{row.utterance_id:05d}_adv.wav", out.x_adv)
        write_wav(
            wav_dir / f"u{row.utterance_id:05d}_delta.wav",
            Waveform(np.clip(out.delta, -1.0, 1.0)),
        )


def _cmd_attack(args, cfg: dict, outdir: Path, emit_wavs: bool) -> None:
    a = cfg["attack"]
    manifest, system = _load_system(cfg, outdir, args.force)
    attacker = _build_attacker(cfg, outdir, system, args.force)
    report = evaluate_attack(
        attacker,
        system,
        manifest,
        a["t"],
        attack_name=a["kind"],
        epsilon=a["epsilon"],
        meta={"config_hash": cfgmod.attacker_hash(cfg), "seed": a["seed"]},
    )
    stem = f"report_{a['kind']}"
    csv_path = outdir / f"{stem}.csv"
    json_path = outdir / f"{stem}.json"
    save_report(report, csv_path, json_path)
    if emit_wavs:
        _emit_attack_wavs(report, manifest, attacker, outdir / "attack")
        print(f"wrote adversarial WAVs under {outdir / 'attack'}")
    agg = report.aggregates()
    snr = "n/a" if agg["mean_snr_db"] is None else f"{agg['mean_snr_db']:.2f} dB"
    print(
        f"wrote {csv_path} and {json_path} "
        f"(tasr {agg['tasr']:.3f}, snr {snr}, mean time {agg['mean_time_s']*1e3:.1f} ms)"
    )


def _cmd_ablate(args, cfg: dict, outdir: Path) -> None:
    a = cfg["attack"]
    if a["kind"] != "ssed":
        raise ConfigError("attack.kind: ablations apply to 'ssed' only")
    manifest, system = _load_system(cfg, outdir, args.force)
    X, _y, _ids = _attack_train_pool(manifest, a["t"])
    position = system.db.position_of(a["t"])
    seeds = _parse_seeds(args.seeds, a["seed"])
    params = {**_ssed_params(a), "target": position}
    runner = run_ablation_saliency if args.which == "saliency" else run_ablation_angular
    result = runner(system, X, manifest, a["t"], params, seeds=seeds)
    path = outdir / f"ablation_{args.which}.json"
    path.write_text(
        json.dumps(
            {
                "summary": result.summary(),
                "with": [r.aggregates() for r in result.with_reports],
                "without": [r.aggregates() for r in result.without_reports],
                "seeds": seeds,
                "config_hash": cfgmod.attacker_hash(cfg),
            },
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    s = result.summary()
    print(
        f"wrote {path} (tasr {s['tasr_with']:.3f} vs {s['tasr_without']:.3f}, "
        f"snr {s['mean_snr_db_with']:.2f} vs {s['mean_snr_db_without']:.2f} dB)"
    )


def _cmd_sweep(args, cfg: dict, outdir: Path) -> None:
    a = cfg["attack"]
    if a["kind"] != "ssed":
        raise ConfigError("attack.kind: sweeps apply to 'ssed' only")
    try:
        grid = [float(v) for v in args.grid.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise UsageFailure(f"--grid must be comma-separated numbers: {exc}") from exc
    manifest, system = _load_system(cfg, outdir, args.force)
    X, _y, _ids = _attack_train_pool(manifest, a["t"])
    position = system.db.position_of(a["t"])
    seeds = _parse_seeds(args.seeds, a["seed"])
    params = {**_ssed_params(a), "target": position}
    result = sweep_hyperparameter(
        args.name, grid, system, X, manifest, a["t"], params, seeds=seeds
    )
    path = outdir / f"sweep_{args.name}.csv"
    save_sweep(result, path)
    print(f"wrote {path} ({len(result.grid)} grid points)")


def _dispatch(args, cfg: dict, outdir: Path) -> None:
    if args.command == "synth":
        _cmd_synth(args, cfg, outdir)
    elif args.command == "train-target":
        _cmd_train_target(args, cfg, outdir)
    elif args.command == "enroll":
        _cmd_enroll(args, cfg, outdir)
    elif args.command == "calibrate":
        _cmd_calibrate(args, cfg, outdir)
    elif args.command == "train-attack":
        _cmd_train_attack(args, cfg, outdir)
    elif args.command == "attack":
        _cmd_attack(args, cfg, outdir, emit_wavs=True)
    elif args.command == "eval":
        _cmd_attack(args, cfg, outdir, emit_wavs=False)
    elif args.command == "ablate":
        _cmd_ablate(args, cfg, outdir)
    else:
        _cmd_sweep(args, cfg, outdir)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        workers = _resolve_workers(args)
        if workers is not None:
            torch.set_num_threads(workers)
        cfg = cfgmod.load_config(args.config)
        if args.seed is not None:
            section = _SEED_SECTION[args.command]
            if section is not None and section in cfg:
                cfg[section]["seed"] = args.seed
        outdir = _output_dir(args, cfg)
    except (ConfigError, UsageFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    outdir.mkdir(parents=True, exist_ok=True)
    lock = outdir / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        os.close(fd)
    except FileExistsError:
        print(
            f"error: {lock} exists; another command may be running on {outdir} "
            "(delete the lock file if it is stale)",
            file=sys.stderr,
        )
        return 1

    try:
        _dispatch(args, cfg, outdir)
        return 0
    except (ConfigError, UsageFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except AdvsalError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    finally:
        try:
            os.unlink(lock)
        except OSError:
            pass


if __name__ == "__main__":
    sys.exit(main())
