"""Tracking-by-detection with appearance-gated Hungarian association.

Lifecycle: a detection that matches no track starts a Tentative track.
The track is Confirmed after ``confirm_hits`` consecutive matches and is
Ended on its first miss while Tentative, or after ``max_misses``
consecutive misses once Confirmed.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .assignment import assign
from .errors import DimensionMismatch, NonMonotonicFrameIndex, NonPositiveExtent, ValidationError, ZeroVector
from .geometry import BBox, bbox_to_state, iou, state_to_bbox
from .kalman import KalmanConfig, KalmanFilter, KalmanState


def cosine_distance(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"cannot compare vectors of length {a.size} and {b.size}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine distance is undefined for a zero vector")
    d = 1.0 - float(a @ b) / (na * nb)
    return min(2.0, max(0.0, d))


def _min_cosine_distance(gallery: np.ndarray, x: np.ndarray) -> float:
    if gallery.shape[1] != x.size:
        raise DimensionMismatch(f"embedding length {x.size} != gallery length {gallery.shape[1]}")
    nx = np.linalg.norm(x)
    if nx == 0:
        raise ZeroVector("detection embedding is a zero vector")
    sims = gallery @ x / (np.linalg.norm(gallery, axis=1) * nx)
    return float(np.clip(1.0 - sims.max(), 0.0, 2.0))


class TrackStatus(str, enum.Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"
    ENDED = "ended"


@dataclass(frozen=True)
class TrackerConfig:
    confirm_hits: int = 3
    max_misses: int = 30
    appearance_gate: float = 0.2
    # 1 - IoU threshold for detections/tracks lacking embeddings
    iou_gate: float = 0.7
    gallery_size: int = 100
    kalman: KalmanConfig = field(default_factory=KalmanConfig)

    def __post_init__(self):
        if self.confirm_hits < 1 or self.max_misses < 1:
            raise ValidationError("confirm_hits and max_misses must be >= 1")
        if not 0 <= self.appearance_gate <= 2:
            raise ValidationError("appearance_gate must lie in [0, 2]")
        if self.gallery_size < 1:
            raise ValidationError("gallery_size must be >= 1")


@dataclass(frozen=True)
class TrackRecord:
    frame: int
    bbox: BBox
    observation: object  # the matched Observation


class Track:
    def __init__(self, track_id: int, state: KalmanState, gallery_size: int):
        self.id = track_id
        self.state = state
        self.status = TrackStatus.TENTATIVE
        self.hits = 0
        self.misses = 0
        self.gallery: deque[np.ndarray] = deque(maxlen=gallery_size)
        self.history: list[TrackRecord] = []
        self.confirmed_frame: int | None = None

    def __repr__(self):
        return f"Track(id={self.id}, status={self.status.value}, hits={self.hits}, misses={self.misses})"

    @property
    def is_confirmed(self) -> bool:
        return self.status is TrackStatus.CONFIRMED

    @property
    def is_tentative(self) -> bool:
        return self.status is TrackStatus.TENTATIVE

    @property
    def predicted_bbox(self) -> BBox | None:
        try:
            return state_to_bbox(*self.state.measurement)
        except NonPositiveExtent:
            return None

    def gallery_array(self) -> np.ndarray | None:
        if not self.gallery:
            return None
        return np.stack(self.gallery)


@dataclass
class StepResult:
    frame: int
    # track id per observation, in input order; every observation is either
    # matched or seeds a new track
    labels: list[int]
    ended: list[Track]


class Tracker:
    """Stateful multi-object tracker; feed one frame at a time, in order."""

    def __init__(self, config: TrackerConfig | None = None):
        self.config = config or TrackerConfig()
        self.kf = KalmanFilter(self.config.kalman)
        self.tracks: list[Track] = []
        self.ended: list[Track] = []
        self.last_frame: int | None = None
        self._next_id = 1

    @property
    def all_tracks(self) -> list[Track]:
        return sorted(self.ended + self.tracks, key=lambda t: t.id)

    def _cost(self, tracks, observations, det_idx):
        cfg = self.config
        cost = np.zeros((len(tracks), len(det_idx)))
        gate = np.zeros_like(cost)
        for i, trk in enumerate(tracks):
            gallery = trk.gallery_array()
            pred = trk.predicted_bbox
            for j, d in enumerate(det_idx):
                obs = observations[d]
                emb = getattr(obs, "embedding", None)
                if gallery is not None and emb is not None:
                    cost[i, j] = _min_cosine_distance(gallery, np.asarray(emb, dtype=float))
                    gate[i, j] = cfg.appearance_gate
                else:
                    cost[i, j] = 1.0 - (iou(pred, obs.bbox) if pred is not None else 0.0)
                    gate[i, j] = cfg.iou_gate
        return cost, gate

    def _match(self, tracks, observations, det_idx):
        if not tracks or not det_idx:
            return [], list(det_idx)
        cost, gate = self._cost(tracks, observations, det_idx)
        result = assign(cost, gate)
        matches = [(tracks[r], det_idx[c]) for r, c in result.matches]
        return matches, [det_idx[c] for c in result.unmatched_cols]

    def _record(self, trk: Track, frame: int, obs):
        emb = getattr(obs, "embedding", None)
        if emb is not None:
            trk.gallery.append(np.asarray(emb, dtype=float))
        trk.history.append(TrackRecord(frame, obs.bbox, obs))

    def step(self, frame: int, observations) -> StepResult:
        observations = list(observations)
        if self.last_frame is not None and frame <= self.last_frame:
            raise NonMonotonicFrameIndex(f"frame {frame} does not follow frame {self.last_frame}")
        for obs in observations:
            if obs.frame != frame:
                raise ValidationError(f"observation from frame {obs.frame} passed to step for frame {frame}")
        self.last_frame = frame
        cfg = self.config

        for trk in self.tracks:
            trk.state = self.kf.predict(trk.state)

        all_idx = list(range(len(observations)))
        confirmed = [t for t in self.tracks if t.is_confirmed]
        tentative = [t for t in self.tracks if t.is_tentative]
        matches_a, remaining = self._match(confirmed, observations, all_idx)
        matches_b, remaining = self._match(tentative, observations, remaining)

        labels = [0] * len(observations)
        matched_ids = set()
        for trk, d in matches_a + matches_b:
            obs = observations[d]
            trk.state = self.kf.update(trk.state, bbox_to_state(obs.bbox))
            trk.hits += 1
            trk.misses = 0
            self._record(trk, frame, obs)
            labels[d] = trk.id
            matched_ids.add(trk.id)
        for trk in self.tracks:
            if trk.id not in matched_ids:
                trk.misses += 1
                trk.hits = 0

        for d in sorted(remaining):
            obs = observations[d]
            trk = Track(self._next_id, self.kf.initiate(bbox_to_state(obs.bbox)), cfg.gallery_size)
            self._next_id += 1
            trk.hits = 1
            self._record(trk, frame, obs)
            labels[d] = trk.id
            self.tracks.append(trk)

        ended = []
        live = []
        for trk in self.tracks:
            if trk.is_tentative:
                if trk.misses >= 1:
                    trk.status = TrackStatus.ENDED
                elif trk.hits >= cfg.confirm_hits:
                    trk.status = TrackStatus.CONFIRMED
                    trk.confirmed_frame = frame
            if trk.misses >= cfg.max_misses:
                trk.status = TrackStatus.ENDED
            (ended if trk.status is TrackStatus.ENDED else live).append(trk)
        self.tracks = live
        self.ended.extend(ended)
        return StepResult(frame, labels, ended)


def track_frames(frames, config: TrackerConfig | None = None) -> Tracker:
    """Run a tracker over ``(frame_index, observations)`` pairs and return it."""
    tracker = Tracker(config)
    for frame, obs in frames:
        tracker.step(frame, obs)
    return tracker


def tracker_step(tracker: Tracker, frame: int, observations) -> StepResult:
    return tracker.step(frame, observations)
