"""End-to-end orchestration: tracking, windowing, training, prediction and
evaluation over observation sequences."""
from __future__ import annotations

import csv
import dataclasses
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataio import Sequence, balance_indices, frame_is_eligible
from .errors import DimensionMismatch, InsufficientData, IoError, ParseError, SingleClassTraining, ValidationError
from .evaluation import EvalReport, balanced_accuracy, count_identity_switches, tte_curves
from .features import CARRY_FORWARD_FRAMES, FRAME_DIM, track_frame_features
from .forest import C, NC, ForestModel, atomic_write_text, train_forest
from .kalman import KalmanConfig
from .model_selection import GridSpec, grid_search_cv
from .tracking import Tracker, TrackerConfig

log = logging.getLogger(__name__)

CHANNELS = ("skeleton", "external", "both")
UNDECIDED = "undecided"


@dataclass(frozen=True)
class PipelineConfig:
    T: int = 14
    # frames of history required before a window is used; defaults to T.
    # Setting it above T scores a short-window model on the same frames as a long one.
    min_history: int | None = None
    channels: str = "skeleton"
    n_trees: int = 400
    max_depth: int = 15
    grid: GridSpec | None = None
    threshold: float = 0.5
    min_width: float = 60.0
    carry_forward: int = CARRY_FORWARD_FRAMES
    seed: int = 0
    workers: int = 1
    tracker: TrackerConfig = field(default_factory=TrackerConfig)

    def __post_init__(self):
        if self.T < 1:
            raise ValidationError("T must be >= 1")
        if self.min_history is not None and self.min_history < 1:
            raise ValidationError("min_history must be >= 1")
        if self.channels not in CHANNELS:
            raise ValidationError(f"channels must be one of {CHANNELS}, got {self.channels!r}")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")

    @property
    def history(self) -> int:
        return max(self.T, self.min_history or self.T)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if self.grid is not None:
            d["grid"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["grid"].items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> PipelineConfig:
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        if "tracker" in d and isinstance(d["tracker"], dict):
            t = dict(d["tracker"])
            if isinstance(t.get("kalman"), dict):
                t["kalman"] = KalmanConfig(**t["kalman"])
            d["tracker"] = TrackerConfig(**t)
        if isinstance(d.get("grid"), dict):
            g = d["grid"]
            d["grid"] = GridSpec(
                tuple(g.get("tree_counts", GridSpec.tree_counts)),
                tuple(g.get("depths", GridSpec.depths)),
                int(g.get("folds", 5)),
            )
        try:
            return cls(**d)
        except TypeError as exc:
            raise ValidationError(f"invalid config: {exc}") from exc


def parallel_map(fn, items, workers: int = 1) -> list:
    """Ordered map; results do not depend on ``workers``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# --- tracking -------------------------------------------------------------------------------


def run_track(seq: Sequence, config: PipelineConfig | None = None) -> Sequence:
    """Track one sequence and label observations with their track id.

    Only tracks that reached Confirmed get ids; observations of tracks that
    died tentative keep ``track_id = None``.
    """
    config = config or PipelineConfig()
    tracker = Tracker(config.tracker)
    for frame, obs in seq.frames():
        tracker.step(frame, obs)
    owner = {}
    n_confirmed = 0
    for trk in tracker.all_tracks:
        if trk.confirmed_frame is None:
            continue
        n_confirmed += 1
        for rec in trk.history:
            owner[id(rec.observation)] = trk.id
    labeled = [dataclasses.replace(o, track_id=owner.get(id(o))) for o in seq.observations]
    meta = dict(seq.metadata)
    meta["confirmed_tracks"] = n_confirmed
    return Sequence(seq.id, labeled, meta)


def run_track_all(sequences, config: PipelineConfig | None = None) -> list[Sequence]:
    config = config or PipelineConfig()
    return parallel_map(lambda s: run_track(s, config), sequences, config.workers)


# --- windows --------------------------------------------------------------------------------


def consecutive_runs(observations) -> list[list]:
    """Split frame-ordered observations into runs of consecutive frame indices."""
    runs: list[list] = []
    for obs in observations:
        if runs and obs.frame == runs[-1][-1].frame + 1:
            runs[-1].append(obs)
        else:
            runs.append([obs])
    return runs


def per_frame_vectors(run, channels: str = "skeleton", carry: int = CARRY_FORWARD_FRAMES) -> np.ndarray:
    """(n_frames, D) matrix: skeleton block, external block, or both (skeleton first)."""
    blocks = []
    if channels in ("skeleton", "both"):
        blocks.append(track_frame_features([o.frame for o in run], [o.skeleton for o in run], carry))
    if channels in ("external", "both"):
        if any(o.embedding is None for o in run):
            raise DimensionMismatch("external feature channel requires an embedding on every observation")
        ext = np.array([o.embedding for o in run], dtype=float)
        if ext.ndim != 2:
            raise DimensionMismatch("external feature vectors differ in length")
        blocks.append(ext)
    return np.hstack(blocks)


def window_matrix(F: np.ndarray, T: int, ends) -> np.ndarray:
    """Rows are the concatenated ``T`` frames ending at each index in ``ends``, oldest first."""
    ends = np.asarray(ends, dtype=int)
    if len(ends) == 0:
        return np.zeros((0, F.shape[1] * T))
    idx = ends[:, None] + np.arange(-T + 1, 1)[None, :]
    return F[idx].reshape(len(ends), -1)


@dataclass(frozen=True)
class WindowRef:
    sequence: str
    key: object  # gt_id or track_id
    run: int
    end: int  # index of the last frame within the run
    end_frame: int
    label: str | None


def _gt_runs(seq: Sequence):
    for key, obs in sorted(seq.by_key("gt_id").items(), key=lambda kv: str(kv[0])):
        for r, run in enumerate(consecutive_runs(obs)):
            yield key, r, run


def training_candidates(seq: Sequence, config: PipelineConfig):
    """All training windows of one sequence's ground-truth tracks, plus counts.

    Windows span ``config.history`` frames that are all eligible (wide
    enough, unoccluded) and carry the label of their last frame.
    """
    L = config.history
    refs = []
    stats = {"windows_total": 0, "windows_eligible": 0, "windows_unlabeled": 0}
    for key, r, run in _gt_runs(seq):
        if len(run) < L:
            continue
        bad = np.array([not frame_is_eligible(o, config.min_width) for o in run], dtype=int)
        csum = np.concatenate([[0], np.cumsum(bad)])
        for end in range(L - 1, len(run)):
            stats["windows_total"] += 1
            if csum[end + 1] - csum[end + 1 - L] > 0:
                continue
            stats["windows_eligible"] += 1
            label = run[end].label
            if label is None:
                stats["windows_unlabeled"] += 1
                continue
            refs.append(WindowRef(seq.id, key, r, end, run[end].frame, label))
    return refs, stats


def training_matrix(sequences, refs, config: PipelineConfig) -> np.ndarray:
    """Feature rows for the selected window refs (in the order given)."""
    by_seq = {s.id: s for s in sequences}
    needed: dict = {}
    for i, ref in enumerate(refs):
        needed.setdefault((ref.sequence, ref.key, ref.run), []).append(i)
    rows = [None] * len(refs)

    def build(item):
        (sid, key, r), members = item
        run = consecutive_runs(by_seq[sid].by_key("gt_id")[key])[r]
        F = per_frame_vectors(run, config.channels, config.carry_forward)
        return members, window_matrix(F, config.T, [refs[i].end for i in members])

    for members, X in parallel_map(build, sorted(needed.items(), key=lambda kv: str(kv[0])), config.workers):
        for i, row in zip(members, X):
            rows[i] = row
    return np.vstack(rows) if rows else np.zeros((0, 0))


def _feature_dim(config: PipelineConfig, ext_dim: int) -> int:
    per_frame = {"skeleton": FRAME_DIM, "external": ext_dim, "both": FRAME_DIM + ext_dim}[config.channels]
    return per_frame * config.T


def _external_dim(sequences) -> int:
    for s in sequences:
        for o in s.observations:
            if o.embedding is not None:
                return len(o.embedding)
    return 0


def build_training_set(sequences, config: PipelineConfig):
    """Filter -> label by last frame -> balance. Returns ``(X, y, refs, report)``."""
    sequences = list(sequences)
    results = parallel_map(lambda s: training_candidates(s, config), sequences, config.workers)
    refs = [r for rs, _ in results for r in rs]
    report = {"sequences": len(sequences)}
    for key in ("windows_total", "windows_eligible", "windows_unlabeled"):
        report[key] = sum(st[key] for _, st in results)
    if not refs:
        raise InsufficientData("no eligible labeled training windows")
    labels = [r.label for r in refs]
    report["per_class_before"] = {C: labels.count(C), NC: labels.count(NC)}
    if len(set(labels)) < 2:
        raise SingleClassTraining(f"all eligible training windows are {labels[0]}")
    keep = balance_indices(labels, config.seed)
    refs = [refs[i] for i in keep]
    y = np.array([r.label for r in refs])
    report["per_class_after"] = {C: int(np.sum(y == C)), NC: int(np.sum(y == NC))}
    report["windows"] = len(refs)
    X = training_matrix(sequences, refs, config)
    return X, y, refs, report


def run_train(sequences, config: PipelineConfig | None = None):
    """Train a model on ground-truth tracks. Returns ``(model, report)``."""
    config = config or PipelineConfig()
    sequences = list(sequences)
    X, y, _, report = build_training_set(sequences, config)
    n_trees, max_depth = config.n_trees, config.max_depth
    if config.grid is not None:
        result = grid_search_cv(X, y, config.grid, config.seed, n_jobs=config.workers)
        n_trees, max_depth = result.n_trees, result.max_depth
        report["grid"] = result.table
        report["grid_best"] = {"n_trees": n_trees, "max_depth": max_depth, "mean_accuracy": result.accuracy}
    model = train_forest(X, y, n_trees, max_depth, config.seed, n_jobs=config.workers)
    ext_dim = _external_dim(sequences) if config.channels != "skeleton" else 0
    model.metadata.update({
        "T": config.T,
        "channels": config.channels,
        "external_dim": ext_dim,
        "min_history": config.min_history,
        "carry_forward": config.carry_forward,
        "training": report,
    })
    report.update({"n_trees": n_trees, "max_depth": max_depth, "feature_dim": model.feature_dim, "T": config.T,
                   "channels": config.channels})
    return model, report


def run_gridsearch(sequences, config: PipelineConfig | None = None):
    config = config or PipelineConfig()
    X, y, _, report = build_training_set(list(sequences), config)
    result = grid_search_cv(X, y, config.grid or GridSpec(), config.seed, n_jobs=config.workers)
    report["grid"] = result.table
    report["grid_best"] = {"n_trees": result.n_trees, "max_depth": result.max_depth,
                           "mean_accuracy": result.accuracy}
    return result, report


# --- prediction -----------------------------------------------------------------------------


@dataclass(frozen=True)
class Prediction:
    sequence: str
    track_id: int
    frame: int
    gt_id: object
    p_crossing: float | None
    decision: str


def _check_model(model: ForestModel, config: PipelineConfig, ext_dim: int):
    expected = _feature_dim(config, ext_dim)
    if model.feature_dim != expected:
        raise DimensionMismatch(
            f"model expects {model.feature_dim} features but T={config.T}, channels={config.channels!r} "
            f"give {expected}"
        )


def run_predict(seq: Sequence, model: ForestModel, config: PipelineConfig | None = None) -> list[Prediction]:
    """Per-frame crossing probability for every confirmed track of a tracked sequence.

    Frames with fewer than ``config.history`` consecutive frames of track
    history are emitted as undecided.
    """
    config = config or PipelineConfig()
    if config.channels != "skeleton":
        _check_model(model, config, _external_dim([seq]))
    else:
        _check_model(model, config, 0)
    out = []
    for tid, obs in sorted(seq.by_key("track_id").items()):
        for run in consecutive_runs(obs):
            ends = [i for i in range(len(run)) if i + 1 >= config.history]
            probs = {}
            if ends:
                F = per_frame_vectors(run, config.channels, config.carry_forward)
                p = model.predict_proba(window_matrix(F, config.T, ends))
                probs = dict(zip(ends, p.tolist()))
            for i, o in enumerate(run):
                if i in probs:
                    pc = probs[i]
                    out.append(Prediction(seq.id, tid, o.frame, o.gt_id, pc, C if pc > config.threshold else NC))
                else:
                    out.append(Prediction(seq.id, tid, o.frame, o.gt_id, None, UNDECIDED))
    out.sort(key=lambda r: (r.frame, r.track_id))
    return out


def run_predict_all(sequences, model, config: PipelineConfig | None = None) -> list[Prediction]:
    config = config or PipelineConfig()
    parts = parallel_map(lambda s: run_predict(s, model, config), sequences, config.workers)
    return [p for part in parts for p in part]


PREDICTION_FIELDS = ("sequence", "track_id", "frame", "gt_id", "p_crossing", "decision")


def format_predictions(rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(PREDICTION_FIELDS)
    for r in rows:
        w.writerow([r.sequence, r.track_id, r.frame, "" if r.gt_id is None else r.gt_id,
                    "" if r.p_crossing is None else repr(r.p_crossing), r.decision])
    return out.getvalue()


def write_predictions(path, rows) -> None:
    atomic_write_text(path, format_predictions(rows))


def read_predictions(path) -> list[Prediction]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not reader or tuple(reader[0]) != PREDICTION_FIELDS:
        raise ParseError(f"expected header {','.join(PREDICTION_FIELDS)}", line=1, path=str(path))
    rows = []
    for lineno, rec in enumerate(reader[1:], start=2):
        try:
            seq, tid, frame, gt, p, dec = rec
            gt_id = None if gt == "" else (int(gt) if gt.lstrip("-").isdigit() else gt)
            if dec not in (C, NC, UNDECIDED):
                raise ValueError(f"bad decision {dec!r}")
            rows.append(Prediction(seq, int(tid), int(frame), gt_id, None if p == "" else float(p), dec))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno, path=str(path)) from exc
    return rows


# --- evaluation -----------------------------------------------------------------------------


def run_eval(predictions, truth_sequences, annotations=(), config: PipelineConfig | None = None):
    """Score predictions against ground truth. Returns ``(EvalReport, curves)``.

    Predictions for pedestrians without ground truth (no ``gt_id`` or no
    action label) are excluded and counted; undecided frames are counted
    separately.
    """
    config = config or PipelineConfig()
    truth = {}
    for seq in truth_sequences:
        for o in seq.observations:
            if o.gt_id is not None:
                truth[(seq.id, o.gt_id, o.frame)] = o.label
    decisions = []
    probs: dict = {}
    n_undecided = n_unannotated = 0
    switches_input: dict = {}
    for r in predictions:
        switches_input.setdefault(r.sequence, []).append((r.frame, r.gt_id, r.track_id))
        label = truth.get((r.sequence, r.gt_id, r.frame)) if r.gt_id is not None else None
        if label is None:
            n_unannotated += 1
            continue
        if r.decision == UNDECIDED:
            n_undecided += 1
            continue
        decisions.append((r.decision, label))
        probs.setdefault((r.sequence, r.gt_id), {})[r.frame] = r.p_crossing
    if n_unannotated:
        log.warning("%d predictions belong to pedestrians without ground truth; excluded from scoring",
                    n_unannotated)
    report = balanced_accuracy(decisions, config.seed)
    report.extra.update({
        "undecided": n_undecided,
        "unannotated": n_unannotated,
        "identity_switches": sum(count_identity_switches(v) for v in switches_input.values()),
    })
    annotations = list(annotations)
    curves = tte_curves(probs, annotations, config.threshold, skip_missing=True) if annotations else {}
    return report, curves


__all__ = [
    "CHANNELS",
    "UNDECIDED",
    "EvalReport",
    "PipelineConfig",
    "Prediction",
    "build_training_set",
    "run_eval",
    "run_gridsearch",
    "run_predict",
    "run_predict_all",
    "run_track",
    "run_track_all",
    "run_train",
]
