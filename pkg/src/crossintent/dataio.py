"""Observation streams, label mapping, training-sample selection and TTE
annotations.

Stream files are JSON Lines. The first line is a header::

    {"format": "crossintent-observations", "version": 1, "sequence": "s0", "metadata": {...}}

followed by one observation per line::

    {"sequence": "s0", "frame": 0, "bbox": [left, top, width, height], "score": 0.9,
     "skeleton": [[x, y, conf] * 18], "embedding": [...], "gt_id": 3,
     "action": "crossing", "motion_direction": "lateral", "occlusion": "none",
     "track_id": 1}

Only ``sequence``, ``frame`` and ``bbox`` are required. Frame indices are
0-based. An empty file is an empty sequence.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema
import numpy as np

from .errors import (
    IoError,
    NonMonotonicFrameIndex,
    ParseError,
    SchemaVersionMismatch,
    SingleClassData,
    UnknownLabel,
    ValidationError,
)
from .forest import C, NC, atomic_write_text
from .geometry import BBox, Skeleton

log = logging.getLogger(__name__)

STREAM_FORMAT = "crossintent-observations"
STREAM_VERSION = 1

OCCLUSION_LEVELS = ("none", "partial", "heavy")
DIRECTIONS = ("lateral", "longitudinal")
CROSSING_TAG = "crossing"
LATERAL_CROSSING_TAGS = frozenset({"clear-path", "moving-fast", "moving-slow", "slow-down", "speed-up"})
# behaviour tags seen in JAAD-style annotations; used only by strict mapping
KNOWN_ACTIONS = LATERAL_CROSSING_TAGS | {
    CROSSING_TAG,
    "not-crossing",
    "standing",
    "walking",
    "stopped",
    "looking",
    "not-looking",
    "handwave",
    "nod",
}
TTE_KINDS = ("keep_walking_to_cross", "start_walking_to_cross")

_NUMBER = {"type": "number"}
HEADER_SCHEMA = {
    "type": "object",
    "required": ["format", "version", "sequence"],
    "properties": {
        "format": {"const": STREAM_FORMAT},
        "version": {"type": "integer"},
        "sequence": {"type": "string", "minLength": 1},
        "metadata": {"type": "object"},
    },
    "additionalProperties": False,
}
RECORD_SCHEMA = {
    "type": "object",
    "required": ["sequence", "frame", "bbox"],
    "properties": {
        "sequence": {"type": "string"},
        "frame": {"type": "integer", "minimum": 0},
        "bbox": {"type": "array", "items": _NUMBER, "minItems": 4, "maxItems": 4},
        "score": {"type": "number", "minimum": 0, "maximum": 1},
        "skeleton": {
            "type": ["array", "null"],
            "minItems": 18,
            "maxItems": 18,
            "items": {"type": "array", "items": _NUMBER, "minItems": 3, "maxItems": 3},
        },
        "embedding": {"type": ["array", "null"], "items": _NUMBER},
        "gt_id": {"type": ["integer", "string", "null"]},
        "action": {"type": ["string", "null"], "minLength": 1},
        "motion_direction": {"enum": [*DIRECTIONS, None]},
        "occlusion": {"enum": list(OCCLUSION_LEVELS)},
        "track_id": {"type": ["integer", "null"]},
    },
    "additionalProperties": False,
}
_header_validator = jsonschema.Draft202012Validator(HEADER_SCHEMA)
_record_validator = jsonschema.Draft202012Validator(RECORD_SCHEMA)


@dataclass(frozen=True)
class Observation:
    frame: int
    bbox: BBox
    score: float = 1.0
    skeleton: Skeleton | None = None
    embedding: tuple[float, ...] | None = None
    gt_id: int | str | None = None
    action: str | None = None
    motion_direction: str | None = None
    occlusion: str = "none"
    track_id: int | None = None

    def __post_init__(self):
        if self.frame < 0:
            raise ValidationError(f"frame must be >= 0, got {self.frame}")
        if not 0 <= self.score <= 1:
            raise ValidationError(f"score must lie in [0, 1], got {self.score}")
        if self.occlusion not in OCCLUSION_LEVELS:
            raise ValidationError(f"unknown occlusion level {self.occlusion!r}")
        if self.motion_direction not in (None, *DIRECTIONS):
            raise ValidationError(f"unknown motion direction {self.motion_direction!r}")
        if self.embedding is not None and not isinstance(self.embedding, tuple):
            object.__setattr__(self, "embedding", tuple(float(v) for v in self.embedding))

    @property
    def label(self) -> str | None:
        """C/NC ground truth derived from the action tag, if annotated."""
        if self.action is None:
            return None
        return map_label(self.action, self.motion_direction)

    def to_record(self, sequence: str) -> dict:
        rec = {"sequence": sequence, "frame": self.frame, "bbox": list(self.bbox.as_tuple()), "score": self.score}
        if self.skeleton is not None:
            rec["skeleton"] = self.skeleton.tolist()
        if self.embedding is not None:
            rec["embedding"] = list(self.embedding)
        for key in ("gt_id", "action", "motion_direction"):
            val = getattr(self, key)
            if val is not None:
                rec[key] = val
        rec["occlusion"] = self.occlusion
        if self.track_id is not None:
            rec["track_id"] = self.track_id
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> Observation:
        skel = rec.get("skeleton")
        return cls(
            frame=rec["frame"],
            bbox=BBox(*(float(v) for v in rec["bbox"])),
            score=float(rec.get("score", 1.0)),
            skeleton=Skeleton(skel) if skel is not None else None,
            embedding=tuple(float(v) for v in rec["embedding"]) if rec.get("embedding") is not None else None,
            gt_id=rec.get("gt_id"),
            action=rec.get("action"),
            motion_direction=rec.get("motion_direction"),
            occlusion=rec.get("occlusion", "none"),
            track_id=rec.get("track_id"),
        )


@dataclass
class Sequence:
    """One video's observations, ordered by frame."""

    id: str
    observations: list[Observation] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        if "n_frames" in self.metadata:
            return int(self.metadata["n_frames"])
        return (self.observations[-1].frame + 1) if self.observations else 0

    def frames(self):
        """Yield ``(frame, observations)`` for every frame index, including empty ones."""
        by_frame: dict[int, list[Observation]] = {}
        for obs in self.observations:
            by_frame.setdefault(obs.frame, []).append(obs)
        last = max([self.n_frames - 1, *by_frame.keys()]) if (by_frame or self.n_frames) else -1
        for f in range(last + 1):
            yield f, by_frame.get(f, [])

    def by_key(self, key: str) -> dict:
        """Group observations by ``gt_id`` or ``track_id`` (None excluded), frame-ordered."""
        groups: dict = {}
        for obs in self.observations:
            k = getattr(obs, key)
            if k is not None:
                groups.setdefault(k, []).append(obs)
        return groups

    def with_observations(self, observations) -> Sequence:
        return Sequence(self.id, list(observations), dict(self.metadata))


def _schema_message(err: jsonschema.ValidationError) -> str:
    where = "/".join(str(p) for p in err.absolute_path)
    return f"{where or '<record>'}: {err.message}"


def parse_sequence(text: str, source: str | None = None, *, check_order: bool = True) -> Sequence:
    lines = text.splitlines()
    seq: Sequence | None = None
    last_frame = -1
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", line=lineno, path=source) from exc
        if seq is None:
            if not isinstance(doc, dict) or doc.get("format") != STREAM_FORMAT:
                raise ParseError("first line must be a stream header", line=lineno, path=source)
            if doc.get("version") != STREAM_VERSION:
                raise SchemaVersionMismatch(
                    f"{source or '<stream>'}: stream version {doc.get('version')!r}, expected {STREAM_VERSION}"
                )
            err = next(iter(_header_validator.iter_errors(doc)), None)
            if err is not None:
                raise ParseError(_schema_message(err), line=lineno, path=source)
            seq = Sequence(doc["sequence"], [], dict(doc.get("metadata", {})))
            continue
        err = next(iter(_record_validator.iter_errors(doc)), None)
        if err is not None:
            raise ParseError(_schema_message(err), line=lineno, path=source)
        if doc["sequence"] != seq.id:
            raise ParseError(f"record for sequence {doc['sequence']!r} in stream {seq.id!r}", line=lineno, path=source)
        try:
            obs = Observation.from_record(doc)
        except ValidationError as exc:
            raise ParseError(str(exc), line=lineno, path=source) from exc
        if check_order and obs.frame < last_frame:
            raise NonMonotonicFrameIndex(
                f"{source or '<stream>'}:{lineno}: frame {obs.frame} follows frame {last_frame}"
            )
        last_frame = max(last_frame, obs.frame)
        seq.observations.append(obs)
    if seq is None:
        stem = Path(source).stem if source else ""
        return Sequence(stem)
    return seq


def read_sequence(path, *, check_order: bool = True) -> Sequence:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return parse_sequence(text, os.fspath(path), check_order=check_order)


def format_sequence(seq: Sequence) -> str:
    out = io.StringIO()
    header = {"format": STREAM_FORMAT, "version": STREAM_VERSION, "sequence": seq.id}
    if seq.metadata:
        header["metadata"] = seq.metadata
    out.write(json.dumps(header, separators=(",", ":"), sort_keys=True) + "\n")
    for obs in seq.observations:
        out.write(json.dumps(obs.to_record(seq.id), separators=(",", ":")) + "\n")
    return out.getvalue()


def write_sequence(path, seq: Sequence) -> None:
    atomic_write_text(path, format_sequence(seq))


def read_sequences(path) -> list[Sequence]:
    """Read one stream file, or every ``*.jsonl`` file in a directory (sorted by name)."""
    p = Path(path)
    if p.is_dir():
        return [read_sequence(f) for f in sorted(p.glob("*.jsonl"))]
    if not p.exists():
        raise IoError(f"no such file or directory: {p}")
    return [read_sequence(p)]


def write_sequences(directory, sequences) -> list[Path]:
    d = Path(directory)
    paths = []
    for seq in sequences:
        target = d / f"{seq.id}.jsonl"
        write_sequence(target, seq)
        paths.append(target)
    return paths


# --- labels and training-set construction -------------------------------------------------


def map_label(action: str, direction: str | None = None, *, strict: bool = False) -> str:
    """Map a raw behaviour tag (and motion direction) to C or NC."""
    if not action:
        raise ValidationError("action tag must be non-empty")
    if strict and action not in KNOWN_ACTIONS:
        raise UnknownLabel(f"unknown action tag {action!r}")
    if action == CROSSING_TAG:
        return C
    if action in LATERAL_CROSSING_TAGS and direction == "lateral":
        return C
    return NC


def frame_is_eligible(obs: Observation, min_width: float = 60.0) -> bool:
    return obs.bbox.width >= min_width and obs.occlusion == "none"


def filter_training_samples(windows, min_width: float = 60.0) -> list:
    """Keep windows whose every frame is unoccluded and at least ``min_width`` px wide.

    Each window is a sequence of observations or has an ``observations`` attribute.
    """
    kept = []
    for w in windows:
        obs = getattr(w, "observations", w)
        if all(frame_is_eligible(o, min_width) for o in obs):
            kept.append(w)
    return kept


def balance_indices(labels, seed: int) -> np.ndarray:
    """Indices (ascending) of a class-balanced subset: the majority class is
    undersampled uniformly at random to the minority count."""
    labels = np.asarray(labels)
    classes = sorted(set(labels.tolist()))
    if len(classes) < 2:
        raise SingleClassData(f"need both classes, got {classes}")
    groups = [np.flatnonzero(labels == c) for c in classes]
    n_min = min(len(g) for g in groups)
    rng = np.random.default_rng(seed)
    keep = [g if len(g) == n_min else rng.choice(g, size=n_min, replace=False) for g in groups]
    return np.sort(np.concatenate(keep))


def balance_classes(windows, seed: int, label=lambda w: w.label) -> list:
    idx = balance_indices([label(w) for w in windows], seed)
    return [windows[i] for i in idx]


# --- TTE annotations ------------------------------------------------------------------------


@dataclass(frozen=True)
class TTEAnnotation:
    sequence: str
    gt_id: int | str
    event_frame: int
    kind: str

    def __post_init__(self):
        if self.kind not in TTE_KINDS:
            raise ValidationError(f"unknown TTE event kind {self.kind!r}")
        if self.event_frame < 0:
            raise ValidationError("event_frame must be >= 0")


TTE_FIELDS = ("sequence", "gt_id", "event_frame", "kind")


def _parse_id(s: str):
    try:
        return int(s)
    except ValueError:
        return s


def read_tte_annotations(path) -> list[TTEAnnotation]:
    """Read the CSV sidecar with columns ``sequence,gt_id,event_frame,kind``."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not rows:
        return []
    if tuple(rows[0]) != TTE_FIELDS:
        raise ParseError(f"expected header {','.join(TTE_FIELDS)}", line=1, path=os.fspath(path))
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise ParseError(f"expected 4 columns, got {len(row)}", line=lineno, path=os.fspath(path))
        try:
            out.append(TTEAnnotation(row[0], _parse_id(row[1]), int(row[2]), row[3]))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno, path=os.fspath(path)) from exc
    return out


def format_tte_annotations(annotations) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TTE_FIELDS)
    for a in annotations:
        w.writerow([a.sequence, a.gt_id, a.event_frame, a.kind])
    return out.getvalue()


def write_tte_annotations(path, annotations) -> None:
    atomic_write_text(path, format_tte_annotations(annotations))


def relabel(obs: Observation, **changes) -> Observation:
    return replace(obs, **changes)
