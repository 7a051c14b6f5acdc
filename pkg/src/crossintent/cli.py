"""Command-line entry point: synth, track, train, predict, eval, gridsearch.

Every subcommand accepts ``--config FILE`` (JSON, keys of PipelineConfig);
explicit flags override it. The resolved configuration is written as
``config.resolved.json`` next to the outputs. The default output directory
comes from ``CROSSINTENT_OUTPUT_DIR`` (else ``./out``).

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import read_sequences, read_tte_annotations, write_sequences, write_tte_annotations
from .errors import CrossIntentError, IoError, ValidationError
from .evaluation import emit_report
from .forest import ForestModel, atomic_write_text
from .pipeline import (
    CHANNELS,
    PipelineConfig,
    read_predictions,
    run_eval,
    run_gridsearch,
    run_predict_all,
    run_track_all,
    run_train,
    write_predictions,
)
from .synth import KINDS, STANDING, WALKING, generate_sequence, random_scene, tte_annotations

log = logging.getLogger("crossintent")

OUTPUT_ENV = "CROSSINTENT_OUTPUT_DIR"
SNAPSHOT = "config.resolved.json"


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return data


def resolve_config(args) -> tuple[PipelineConfig, dict]:
    """Merge the config file with explicit flags; return the config and extra (non-pipeline) keys."""
    raw = load_config(getattr(args, "config", None))
    extra = {k: raw.pop(k) for k in list(raw) if k == "synth"}
    overrides = {
        "T": getattr(args, "T", None),
        "min_history": getattr(args, "min_history", None),
        "channels": getattr(args, "channels", None),
        "n_trees": getattr(args, "n_trees", None),
        "max_depth": getattr(args, "max_depth", None),
        "threshold": getattr(args, "threshold", None),
        "min_width": getattr(args, "min_width", None),
        "seed": getattr(args, "seed", None),
        "workers": getattr(args, "workers", None),
    }
    raw.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "grid", False) and "grid" not in raw:
        raw["grid"] = {}
    return PipelineConfig.from_dict(raw), extra


def output_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUTPUT_ENV) or "out")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {out}: {exc}") from exc
    return out


def write_snapshot(out: Path, command: str, config: PipelineConfig, **extra) -> None:
    settings = config.to_dict()
    # worker count never changes results; leaving it out keeps snapshots comparable
    settings.pop("workers")
    snap = {"command": command, "version": __version__, "config": settings}
    snap.update(extra)
    atomic_write_text(out / SNAPSHOT, _dumps(snap))


# --- subcommands ----------------------------------------------------------------------------


def cmd_synth(args) -> int:
    config, extra = resolve_config(args)
    s = extra.get("synth", {})
    n_seq = args.sequences if args.sequences is not None else s.get("sequences", 10)
    n_frames = args.frames if args.frames is not None else s.get("frames", 60)
    n_peds = args.pedestrians if args.pedestrians is not None else s.get("pedestrians", 4)
    jitter = args.jitter if args.jitter is not None else s.get("jitter", 2.0)
    period = args.period if args.period is not None else s.get("period", 14.0)
    kinds = tuple(args.kinds.split(",")) if args.kinds else tuple(s.get("kinds", (WALKING, STANDING)))
    for k in kinds:
        if k not in KINDS:
            raise ValidationError(f"unknown kind {k!r}; choose from {', '.join(KINDS)}")
    if n_seq < 0 or n_frames < 1 or n_peds < 1:
        raise ValidationError("need sequences >= 0, frames >= 1, pedestrians >= 1")
    out = output_dir(args)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    sequences, annotations = [], []
    for i in range(n_seq):
        params = random_scene(rng, n_peds, n_frames, period=period, jitter=jitter, kinds=kinds)
        sid = f"synth_{i:04d}"
        sequences.append(generate_sequence(params, n_frames, int(rng.integers(2**31)), sid))
        annotations += tte_annotations(sid, params)
    write_sequences(out / "sequences", sequences)
    if annotations:
        write_tte_annotations(out / "tte.csv", annotations)
    settings = {"sequences": n_seq, "frames": n_frames, "pedestrians": n_peds, "jitter": jitter,
                "period": period, "kinds": list(kinds)}
    write_snapshot(out, "synth", config, synth=settings)
    log.info("wrote %d sequences to %s", n_seq, out / "sequences")
    return 0


def cmd_track(args) -> int:
    config, _ = resolve_config(args)
    sequences = read_sequences(args.input)
    out = output_dir(args)
    tracked = run_track_all(sequences, config)
    write_sequences(out / "tracks", tracked)
    write_snapshot(out, "track", config, input=str(args.input))
    for s in tracked:
        log.info("%s: %d confirmed tracks", s.id, s.metadata["confirmed_tracks"])
    return 0


def cmd_train(args) -> int:
    config, _ = resolve_config(args)
    sequences = read_sequences(args.input)
    out = output_dir(args)
    model, report = run_train(sequences, config)
    model.save(out / "model.json")
    atomic_write_text(out / "train_report.json", _dumps(report))
    write_snapshot(out, "train", config, input=str(args.input))
    log.info("trained %d trees, depth %d, on %d windows", model.n_trees, model.max_depth, report["windows"])
    return 0


def cmd_gridsearch(args) -> int:
    config, _ = resolve_config(args)
    if config.grid is None:
        config = PipelineConfig.from_dict({**config.to_dict(), "grid": {}})
    sequences = read_sequences(args.input)
    out = output_dir(args)
    result, report = run_gridsearch(sequences, config)
    atomic_write_text(out / "gridsearch.json", _dumps(report))
    write_snapshot(out, "gridsearch", config, input=str(args.input))
    log.info("best: %d trees, depth %d, mean accuracy %.4f", result.n_trees, result.max_depth, result.accuracy)
    return 0


def _model_config(model: ForestModel, config: PipelineConfig, args) -> PipelineConfig:
    """Window settings default to the ones the model was trained with."""
    d = config.to_dict()
    meta = model.metadata
    explicit = load_config(getattr(args, "config", None))
    for key in ("T", "channels", "min_history"):
        if key in meta and getattr(args, key, None) is None and key not in explicit:
            d[key] = meta[key]
    return PipelineConfig.from_dict(d)


def cmd_predict(args) -> int:
    config, _ = resolve_config(args)
    model = ForestModel.load(args.model)
    config = _model_config(model, config, args)
    sequences = read_sequences(args.input)
    out = output_dir(args)
    if args.tracked:
        tracked = sequences
    else:
        tracked = run_track_all(sequences, config)
    rows = run_predict_all(tracked, model, config)
    write_predictions(out / "predictions.csv", rows)
    write_snapshot(out, "predict", config, input=str(args.input), model=str(args.model))
    log.info("wrote %d predictions", len(rows))
    return 0


def cmd_eval(args) -> int:
    config, _ = resolve_config(args)
    predictions = read_predictions(args.predictions)
    truth = read_sequences(args.truth)
    annotations = read_tte_annotations(args.tte) if args.tte else []
    out = output_dir(args)
    report, curves = run_eval(predictions, truth, annotations, config)
    emit_report(report, curves, out)
    write_snapshot(out, "eval", config, predictions=str(args.predictions), truth=str(args.truth),
                   tte=None if args.tte is None else str(args.tte))
    log.info("balanced accuracy %.4f over %d decisions", report.accuracy, report.n_decisions)
    return 0


# --- parser ---------------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, *, windows=True, forest=False):
    p.add_argument("--config", type=Path, help="JSON file with pipeline settings; flags override it")
    p.add_argument("--out", type=Path, help=f"output directory (default: ${OUTPUT_ENV} or ./out)")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--workers", type=int, help="worker threads; results do not depend on it (default 1)")
    if windows:
        p.add_argument("-T", "--T", dest="T", type=int, help="window length in frames (default 14)")
        p.add_argument("--min-history", type=int,
                       help="frames of track history required before deciding (default: T)")
        p.add_argument("--channels", choices=CHANNELS, help="feature channels (default skeleton)")
        p.add_argument("--min-width", type=float, help="training filter: minimum box width in px (default 60)")
    if forest:
        p.add_argument("--n-trees", type=int, help="number of trees (default 400)")
        p.add_argument("--max-depth", type=int, help="maximum tree depth (default 15)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crossintent", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic observation streams and TTE annotations")
    _common(p, windows=False)
    p.add_argument("--sequences", type=int, help="number of sequences (default 10)")
    p.add_argument("--frames", type=int, help="frames per sequence (default 60)")
    p.add_argument("--pedestrians", type=int, help="pedestrians per sequence (default 4)")
    p.add_argument("--jitter", type=float, help="keypoint noise std in px (default 2)")
    p.add_argument("--period", type=float, help="gait period in frames (default 14)")
    p.add_argument("--kinds", help=f"comma-separated pedestrian kinds from {','.join(KINDS)}")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("track", help="assign track ids to observation streams")
    p.add_argument("input", type=Path, help="stream file or directory of *.jsonl streams")
    _common(p, windows=False)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("train", help="train a crossing classifier on ground-truth tracks")
    p.add_argument("input", type=Path, help="labeled stream file or directory")
    _common(p, forest=True)
    p.add_argument("--grid", action="store_true", help="pick trees/depth by 5-fold grid search")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gridsearch", help="cross-validate the trees x depth grid")
    p.add_argument("input", type=Path, help="labeled stream file or directory")
    _common(p)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("predict", help="track streams and emit per-frame crossing probabilities")
    p.add_argument("input", type=Path, help="stream file or directory")
    p.add_argument("--model", type=Path, required=True, help="model file written by train")
    p.add_argument("--tracked", action="store_true", help="input already carries track ids (output of track)")
    p.add_argument("--threshold", type=float, help="decide C when p > threshold (default 0.5)")
    _common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("predictions", type=Path, help="predictions.csv written by predict")
    p.add_argument("--truth", type=Path, required=True, help="ground-truth stream file or directory")
    p.add_argument("--tte", type=Path, help="TTE annotation CSV")
    p.add_argument("--threshold", type=float, help="predictability threshold (default 0.5)")
    _common(p, windows=False)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (IoError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except CrossIntentError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
