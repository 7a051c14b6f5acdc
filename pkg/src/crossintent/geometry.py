"""Box and keypoint primitives shared by the tracker, features and I/O.

Image coordinates: x is the column (rightward), y is the row (downward),
origin top-left. Everything is real-valued.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveExtent, ValidationError

# 18-point skeleton order used by OpenPose-style estimators.
KEYPOINT_NAMES = (
    "nose",
    "neck",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_hip",
    "r_knee",
    "r_ankle",
    "l_hip",
    "l_knee",
    "l_ankle",
    "r_eye",
    "l_eye",
    "r_ear",
    "l_ear",
)
KEYPOINT_INDEX = {name: i for i, name in enumerate(KEYPOINT_NAMES)}
NUM_KEYPOINTS = len(KEYPOINT_NAMES)


@dataclass(frozen=True)
class BBox:
    left: float
    top: float
    width: float
    height: float

    def __post_init__(self):
        vals = (self.left, self.top, self.width, self.height)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"non-finite bbox {vals}")
        if self.width <= 0 or self.height <= 0:
            raise NonPositiveExtent(f"bbox extent must be positive, got {self.width}x{self.height}")

    @property
    def right(self) -> float:
        return self.left + self.width

    @property
    def bottom(self) -> float:
        return self.top + self.height

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.left, self.top, self.width, self.height)


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    confidence: float

    @property
    def valid(self) -> bool:
        return self.confidence > 0


class Skeleton:
    """Immutable 18-keypoint skeleton backed by an ``(18, 3)`` array of
    ``(x, y, confidence)`` rows in :data:`KEYPOINT_NAMES` order.

    A confidence of 0 marks a keypoint as not observed; its coordinates
    are then meaningless.
    """

    __slots__ = ("_points",)

    def __init__(self, points):
        arr = np.array(points, dtype=float)
        if arr.shape != (NUM_KEYPOINTS, 3):
            raise ValidationError(f"skeleton must have shape (18, 3), got {arr.shape}")
        conf = arr[:, 2]
        if np.any(~np.isfinite(conf)) or np.any(conf < 0) or np.any(conf > 1):
            raise ValidationError("keypoint confidence must lie in [0, 1]")
        observed = conf > 0
        if not np.all(np.isfinite(arr[observed, :2])):
            raise ValidationError("observed keypoints must have finite coordinates")
        arr.setflags(write=False)
        self._points = arr

    @classmethod
    def from_keypoints(cls, keypoints) -> Skeleton:
        return cls([(k.x, k.y, k.confidence) for k in keypoints])

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def keypoints(self) -> tuple[Keypoint, ...]:
        return tuple(Keypoint(float(x), float(y), float(c)) for x, y, c in self._points)

    @property
    def valid_mask(self) -> np.ndarray:
        return self._points[:, 2] > 0

    def __len__(self):
        return NUM_KEYPOINTS

    def __getitem__(self, i) -> Keypoint:
        x, y, c = self._points[i]
        return Keypoint(float(x), float(y), float(c))

    def __eq__(self, other):
        if not isinstance(other, Skeleton):
            return NotImplemented
        return np.array_equal(self._points, other._points)

    def __hash__(self):
        return hash(self._points.tobytes())

    def __repr__(self):
        return f"Skeleton(valid={int(self.valid_mask.sum())}/18)"

    def tolist(self) -> list[list[float]]:
        return self._points.tolist()


def bbox_to_state(b: BBox) -> tuple[float, float, float, float]:
    """Return ``(u, v, aspect, h)``: box center, width/height ratio and height."""
    return (b.left + b.width / 2, b.top + b.height / 2, b.width / b.height, b.height)


def state_to_bbox(u: float, v: float, aspect: float, h: float) -> BBox:
    if h <= 0 or aspect <= 0:
        raise NonPositiveExtent(f"height and aspect must be positive, got h={h}, aspect={aspect}")
    w = aspect * h
    return BBox(u - w / 2, v - h / 2, w, h)


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.right, b.right) - max(a.left, b.left)
    ih = min(a.bottom, b.bottom) - max(a.top, b.top)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return min(1.0, inter / union)
