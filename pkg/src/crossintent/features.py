"""Geometric skeleton features and temporal windows.

Nine keypoints (neck, shoulders, hips, knees, ankles) are kept. Per frame,
every pair contributes ``(dx/h, dy/h, |v|/h, theta)`` and every triplet the
three interior angles of its triangle, for 36*4 + 84*3 = 396 values. ``h``
is the vertical extent of the valid selected keypoints. Angles stay in
radians and are not divided by ``h``.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DegenerateHeight, DimensionMismatch, InsufficientHistory, ValidationError
from .geometry import KEYPOINT_INDEX, Skeleton

SELECTED_NAMES = (
    "neck",
    "r_shoulder",
    "l_shoulder",
    "r_hip",
    "l_hip",
    "r_knee",
    "l_knee",
    "r_ankle",
    "l_ankle",
)
SELECTED_INDICES = tuple(KEYPOINT_INDEX[n] for n in SELECTED_NAMES)  # (1, 2, 5, 8, 11, 9, 12, 10, 13)
N_SELECTED = len(SELECTED_NAMES)

PAIRS = np.array(list(combinations(range(N_SELECTED), 2)))
TRIPLETS = np.array(list(combinations(range(N_SELECTED), 3)))
PAIR_COMPONENTS = ("dx", "dy", "dist", "theta")
N_PAIR_FEATURES = len(PAIRS) * len(PAIR_COMPONENTS)  # 144
N_TRIPLET_FEATURES = len(TRIPLETS) * 3  # 252
FRAME_DIM = N_PAIR_FEATURES + N_TRIPLET_FEATURES  # 396

MIN_HEIGHT = 1.0
CARRY_FORWARD_FRAMES = 5


def feature_names() -> list[str]:
    """Human-readable name of every slot of a frame feature vector."""
    names = []
    for i, j in PAIRS:
        for comp in PAIR_COMPONENTS:
            names.append(f"{SELECTED_NAMES[i]}-{SELECTED_NAMES[j]}:{comp}")
    for tri in TRIPLETS:
        label = "-".join(SELECTED_NAMES[t] for t in tri)
        for vertex in tri:
            names.append(f"{label}:angle@{SELECTED_NAMES[vertex]}")
    return names


@dataclass(frozen=True)
class SelectedKeypoints:
    xy: np.ndarray  # (9, 2)
    confidence: np.ndarray  # (9,)

    @property
    def valid_mask(self) -> np.ndarray:
        return self.confidence > 0


@dataclass(frozen=True)
class FrameFeatures:
    values: np.ndarray
    source_frame: int | None = None


@dataclass(frozen=True)
class WindowFeatures:
    values: np.ndarray
    label: str | None = None
    track_id: int | None = None
    end_frame: int | None = None


def select_keypoints(s: Skeleton) -> SelectedKeypoints:
    pts = s.points[list(SELECTED_INDICES)]
    xy = pts[:, :2].copy()
    conf = pts[:, 2].copy()
    xy[conf <= 0] = 0.0
    return SelectedKeypoints(xy, conf)


def compute_height(k: SelectedKeypoints) -> float:
    valid = k.valid_mask
    if valid.sum() < 2:
        raise DegenerateHeight(f"need at least 2 valid keypoints, got {int(valid.sum())}")
    ys = k.xy[valid, 1]
    h = float(ys.max() - ys.min())
    if h < MIN_HEIGHT:
        raise DegenerateHeight(f"keypoint height {h:.3g} px is below {MIN_HEIGHT} px")
    return h


def _interior_angle(p, q, r):
    """Angle at ``p`` of triangle (p, q, r); arrays of shape (..., 2).

    atan2(|cross|, dot) equals the arccos of the normalised dot product but
    stays accurate near 0 and pi, where arccos amplifies rounding error.
    """
    a = q - p
    b = r - p
    cross = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    dot = np.einsum("...k,...k->...", a, b)
    defined = (np.hypot(a[..., 0], a[..., 1]) > 0) & (np.hypot(b[..., 0], b[..., 1]) > 0)
    return np.arctan2(np.abs(cross), dot), defined


def features_from_arrays(xy: np.ndarray, valid: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Vectorised core: ``xy`` (N, 9, 2), ``valid`` (N, 9), ``h`` (N,) -> (N, 396)."""
    n = xy.shape[0]
    out = np.zeros((n, FRAME_DIM))

    i, j = PAIRS[:, 0], PAIRS[:, 1]
    diff = xy[:, j] - xy[:, i]  # (N, 36, 2)
    dx = diff[..., 0] / h[:, None]
    dy = diff[..., 1] / h[:, None]
    dist = np.hypot(dx, dy)
    theta = np.arctan2(diff[..., 1], diff[..., 0])
    theta = np.where(theta == -np.pi, np.pi, theta)  # range (-pi, pi]
    pair_vals = np.stack([dx, dy, dist, theta], axis=-1)
    pair_ok = valid[:, i] & valid[:, j]
    pair_vals[~pair_ok] = 0.0
    out[:, :N_PAIR_FEATURES] = pair_vals.reshape(n, -1)

    a, b, c = TRIPLETS[:, 0], TRIPLETS[:, 1], TRIPLETS[:, 2]
    pa, pb, pc = xy[:, a], xy[:, b], xy[:, c]
    ang_a, ok_a = _interior_angle(pa, pb, pc)
    ang_b, ok_b = _interior_angle(pb, pa, pc)
    ang_c, ok_c = _interior_angle(pc, pa, pb)
    tri_vals = np.stack([ang_a, ang_b, ang_c], axis=-1)
    # coincident points leave the triangle undefined; zero-fill like missing points
    tri_ok = valid[:, a] & valid[:, b] & valid[:, c] & ok_a & ok_b & ok_c
    tri_vals[~tri_ok] = 0.0
    out[:, N_PAIR_FEATURES:] = tri_vals.reshape(n, -1)
    return out


def frame_features(k: SelectedKeypoints, source_frame: int | None = None) -> FrameFeatures:
    h = compute_height(k)
    vals = features_from_arrays(k.xy[None], k.valid_mask[None], np.array([h]))[0]
    return FrameFeatures(vals, source_frame)


def skeleton_features(s: Skeleton, source_frame: int | None = None) -> FrameFeatures:
    return frame_features(select_keypoints(s), source_frame)


def window_features(buffer, T: int, label=None, track_id=None) -> WindowFeatures:
    """Concatenate the last ``T`` frame vectors of a track, oldest first."""
    if T < 1:
        raise ValidationError("T must be >= 1")
    buffer = list(buffer)
    if len(buffer) < T:
        raise InsufficientHistory(f"need {T} frames, have {len(buffer)}")
    frames = buffer[-T:]
    src = [f.source_frame for f in frames]
    if all(s is not None for s in src) and any(b - a != 1 for a, b in zip(src, src[1:])):
        raise ValidationError(f"window frames are not consecutive: {src}")
    values = np.concatenate([f.values for f in frames])
    return WindowFeatures(values, label, track_id, src[-1])


def concat_external(w: WindowFeatures | np.ndarray, ext, T: int | None = None) -> np.ndarray:
    """Interleave a per-frame external vector after each frame's skeleton block.

    ``ext`` is a (T, d) array; the result has length ``(396 + d) * T``.
    """
    values = np.asarray(w.values if isinstance(w, WindowFeatures) else w, dtype=float)
    ext = np.asarray(ext, dtype=float)
    if ext.ndim == 1 and ext.size == 0:
        ext = ext.reshape(0, 0)
    if T is None:
        T = values.size // FRAME_DIM
    if values.size != FRAME_DIM * T:
        raise DimensionMismatch(f"window has {values.size} values, expected {FRAME_DIM * T}")
    if ext.size == 0:
        return values.copy()
    if ext.ndim != 2 or ext.shape[0] != T:
        raise DimensionMismatch(f"external features must have shape (T={T}, d), got {ext.shape}")
    return np.concatenate([values.reshape(T, FRAME_DIM), ext], axis=1).ravel()


class KeypointCarry:
    """Per-track carry-forward of missing keypoints.

    A keypoint missing in the current frame takes its last valid position
    if that was seen at most ``max_age`` frames ago; otherwise it stays
    missing and the features that use it are zero-filled.
    """

    def __init__(self, max_age: int = CARRY_FORWARD_FRAMES):
        self.max_age = max_age
        self._xy = np.zeros((N_SELECTED, 2))
        self._conf = np.zeros(N_SELECTED)
        self._seen = np.full(N_SELECTED, -np.inf)

    def fill(self, k: SelectedKeypoints, frame: int) -> SelectedKeypoints:
        valid = k.valid_mask
        self._xy[valid] = k.xy[valid]
        self._conf[valid] = k.confidence[valid]
        self._seen[valid] = frame
        recent = ~valid & (frame - self._seen <= self.max_age)
        if not recent.any():
            return k
        xy = k.xy.copy()
        conf = k.confidence.copy()
        xy[recent] = self._xy[recent]
        conf[recent] = self._conf[recent]
        return SelectedKeypoints(xy, conf)


def track_frame_features(frames, skeletons, carry: int = CARRY_FORWARD_FRAMES) -> np.ndarray:
    """Feature matrix (N, 396) for one track's consecutive observations.

    ``skeletons`` may contain ``None``; frames without a skeleton, or whose
    keypoints give a degenerate height, produce an all-zero row.
    """
    filler = KeypointCarry(carry)
    n = len(frames)
    xy = np.zeros((n, N_SELECTED, 2))
    valid = np.zeros((n, N_SELECTED), dtype=bool)
    h = np.ones(n)
    usable = np.zeros(n, dtype=bool)
    for r, (frame, skel) in enumerate(zip(frames, skeletons)):
        if skel is None:
            k = SelectedKeypoints(np.zeros((N_SELECTED, 2)), np.zeros(N_SELECTED))
        else:
            k = select_keypoints(skel)
        k = filler.fill(k, frame)
        try:
            h[r] = compute_height(k)
        except DegenerateHeight:
            continue
        xy[r] = k.xy
        valid[r] = k.valid_mask
        usable[r] = True
    out = features_from_arrays(xy, valid, h)
    out[~usable] = 0.0
    return out
