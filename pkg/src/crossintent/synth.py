"""Seeded synthetic pedestrians with a parametric side-view gait.

Walking legs swing sinusoidally in antiphase; each knee flexes only while
its leg swings forward and the shoulders counter-swing at 10% of the leg
amplitude. Twice per gait period both legs pass through the exact standing
pose, so a single frame of a walker can be indistinguishable from a
standing pedestrian while a window spanning a period is not.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .dataio import Observation, Sequence, TTEAnnotation
from .geometry import KEYPOINT_INDEX, BBox, Skeleton

WALKING = "walking_lateral"
STANDING = "standing"
START_WALKING = "start_walking"
KINDS = (WALKING, STANDING, START_WALKING)

EMBEDDING_NOISE = 0.05
BBOX_PAD = 0.10
# fractions of the neck-to-ankle body height
TORSO = 0.32
THIGH = 0.24
SHANK = 0.24
HEAD = 0.12
SHOULDER_OFFSET = 0.06
HIP_OFFSET = 0.04
UPPER_ARM = 0.17
FOREARM = 0.15
MIN_ASPECT = 0.35


@dataclass(frozen=True)
class GaitParams:
    kind: str = WALKING
    speed: float = 3.0  # px / frame while walking
    period: float = 14.0  # frames per gait cycle
    height: float = 400.0  # neck-to-ankle, px
    jitter: float = 0.0  # keypoint noise std, px
    start: tuple[float, float] = (300.0, 500.0)  # hip center at frame 0
    direction: int = 1  # +1 walks / faces right, -1 left
    event_frame: int | None = None  # start_walking: first walking frame
    phase: float = 0.0  # gait phase at frame 0 (cycles)
    swing_amplitude: float = 0.45  # hip swing, rad
    knee_amplitude: float = 0.7  # max knee flexion, rad
    thigh: float | None = None  # px; default from height
    shank: float | None = None
    gt_id: int | None = None
    identity: tuple[float, ...] | None = None  # embedding direction; default one-hot by gt_id

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown gait kind {self.kind!r}")
        if self.speed < 0 or self.period < 2 or self.height <= 0:
            raise ValueError("need speed >= 0, period >= 2, height > 0")
        if self.kind == START_WALKING and self.event_frame is None:
            raise ValueError("start_walking needs an event_frame")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")


def _gait_state(p: GaitParams, t: int) -> tuple[float, float]:
    """(gait angle, walked distance) at frame ``t``; angle 0 is the standing pose."""
    if p.kind == STANDING:
        return 0.0, 0.0
    if p.kind == START_WALKING:
        if t < p.event_frame:
            return 0.0, 0.0
        dt = t - p.event_frame
        return 2 * math.pi * dt / p.period, p.speed * dt
    return 2 * math.pi * (p.phase + t / p.period), p.speed * t


def pose(p: GaitParams, t: int) -> np.ndarray:
    """Noise-free (18, 2) keypoint positions at frame ``t``."""
    theta, walked = _gait_state(p, t)
    H = p.height
    s = p.direction
    thigh = p.thigh if p.thigh is not None else THIGH * H
    shank = p.shank if p.shank is not None else SHANK * H
    hx = p.start[0] + s * walked
    hy = p.start[1]

    swing = p.swing_amplitude * math.sin(theta)
    phi = {"r": swing, "l": -swing}
    knee_flex = {
        "r": p.knee_amplitude * max(0.0, math.sin(theta)) ** 2,
        "l": p.knee_amplitude * max(0.0, -math.sin(theta)) ** 2,
    }
    pts = np.zeros((18, 2))

    def put(name, x, y):
        pts[KEYPOINT_INDEX[name]] = (x, y)

    neck = (hx, hy - TORSO * H)
    put("neck", *neck)
    head = (neck[0] + s * 0.04 * H, neck[1] - HEAD * H * 0.6)
    put("nose", head[0] + s * 0.03 * H, head[1])
    put("r_eye", head[0] + s * 0.025 * H + 0.01 * H, head[1] - 0.02 * H)
    put("l_eye", head[0] + s * 0.025 * H - 0.01 * H, head[1] - 0.02 * H)
    put("r_ear", head[0] - s * 0.01 * H + 0.02 * H, head[1] - 0.01 * H)
    put("l_ear", head[0] - s * 0.01 * H - 0.02 * H, head[1] - 0.01 * H)

    for side, sign in (("r", 1.0), ("l", -1.0)):
        leg_dx = thigh * math.sin(phi[side])
        sx = neck[0] + sign * SHOULDER_OFFSET * H - s * 0.1 * leg_dx
        sy = neck[1] + 0.02 * H
        put(f"{side}_shoulder", sx, sy)
        arm = -0.5 * phi[side]
        ex = sx + s * UPPER_ARM * H * math.sin(arm)
        ey = sy + UPPER_ARM * H * math.cos(arm)
        put(f"{side}_elbow", ex, ey)
        put(f"{side}_wrist", ex + s * FOREARM * H * math.sin(arm * 1.3), ey + FOREARM * H * math.cos(arm * 1.3))

        hip_x = hx + sign * HIP_OFFSET * H
        put(f"{side}_hip", hip_x, hy)
        kx = hip_x + s * leg_dx
        ky = hy + thigh * math.cos(phi[side])
        put(f"{side}_knee", kx, ky)
        shin = phi[side] - knee_flex[side]
        put(f"{side}_ankle", kx + s * shank * math.sin(shin), ky + shank * math.cos(shin))
    return pts


def _bbox(pts: np.ndarray, hx: float) -> BBox:
    half = float(np.abs(pts[:, 0] - hx).max())
    top, bottom = float(pts[:, 1].min()), float(pts[:, 1].max())
    h = (bottom - top) * (1 + BBOX_PAD)
    w = max(2 * half * (1 + BBOX_PAD), MIN_ASPECT * h)
    cy = (top + bottom) / 2
    return BBox(hx - w / 2, cy - h / 2, w, h)


def _action(p: GaitParams, t: int) -> tuple[str, str | None]:
    walking = p.kind == WALKING or (p.kind == START_WALKING and t >= p.event_frame)
    return ("crossing", "lateral") if walking else ("standing", None)


def _identity(p: GaitParams, gt_id: int, dim: int) -> np.ndarray:
    if p.identity is not None:
        v = np.asarray(p.identity, dtype=float)
    else:
        v = np.zeros(dim)
        v[(gt_id - 1) % dim] = 1.0
    return v / np.linalg.norm(v)


def generate_sequence(
    params,
    n_frames: int,
    seed: int,
    sequence_id: str = "synth",
    embedding_dim: int = 32,
    first_frame: int = 0,
) -> Sequence:
    """Render pedestrians ``params`` for ``n_frames`` frames.

    Observations are ordered by frame, then by pedestrian. Ground-truth ids
    default to 1, 2, ... in parameter order.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    params = [p if p.gt_id is not None else replace(p, gt_id=i + 1) for i, p in enumerate(params)]
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    identities = [_identity(p, p.gt_id, embedding_dim) for p in params]
    observations = []
    for t in range(first_frame, first_frame + n_frames):
        for p, ident in zip(params, identities):
            pts = pose(p, t)
            # draw noise unconditionally to keep the random stream aligned across settings
            noise = rng.normal(0.0, 1.0, size=pts.shape)
            emb_noise = rng.normal(0.0, EMBEDDING_NOISE, size=embedding_dim)
            if p.jitter > 0:
                pts = pts + p.jitter * noise
            _, walked = _gait_state(p, t)
            hx = p.start[0] + p.direction * walked
            skel = Skeleton(np.column_stack([pts, np.ones(18)]))
            emb = ident + emb_noise
            emb = emb / np.linalg.norm(emb)
            action, direction = _action(p, t)
            observations.append(
                Observation(
                    frame=t,
                    bbox=_bbox(pts, hx),
                    score=1.0,
                    skeleton=skel,
                    embedding=tuple(emb.tolist()),
                    gt_id=p.gt_id,
                    action=action,
                    motion_direction=direction,
                    occlusion="none",
                )
            )
    meta = {"n_frames": first_frame + n_frames, "generator": "crossintent.synth", "seed": seed}
    return Sequence(sequence_id, observations, meta)


def tte_annotations(sequence_id: str, params) -> list[TTEAnnotation]:
    """Event annotations for pedestrians that carry an ``event_frame``."""
    out = []
    for i, p in enumerate(params):
        if p.event_frame is None:
            continue
        kind = "start_walking_to_cross" if p.kind == START_WALKING else "keep_walking_to_cross"
        out.append(TTEAnnotation(sequence_id, p.gt_id if p.gt_id is not None else i + 1, p.event_frame, kind))
    return out


def degrade(seq: Sequence, drop_prob: float, keypoint_drop_prob: float, seed: int) -> Sequence:
    """Randomly remove whole detections and individual keypoints (confidence -> 0)."""
    if not (0 <= drop_prob <= 1 and 0 <= keypoint_drop_prob <= 1):
        raise ValueError("probabilities must lie in [0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    kept = []
    for obs in seq.observations:
        u_det = rng.random()
        u_kp = rng.random(18)
        if u_det < drop_prob:
            continue
        if obs.skeleton is not None and keypoint_drop_prob > 0:
            pts = obs.skeleton.points.copy()
            pts[u_kp < keypoint_drop_prob, 2] = 0.0
            obs = replace(obs, skeleton=Skeleton(pts))
        kept.append(obs)
    return seq.with_observations(kept)


def random_scene(rng: np.random.Generator, n_peds: int, n_frames: int, *, period: float = 14.0,
                 jitter: float = 2.0, kinds=(WALKING, STANDING), height=(380.0, 460.0)) -> list[GaitParams]:
    """Random non-overlapping pedestrians spread across a 1920-px wide image."""
    out = []
    lanes = rng.permutation(n_peds)
    for i in range(n_peds):
        kind = str(kinds[int(rng.integers(len(kinds)))])
        direction = int(rng.choice([-1, 1]))
        speed = float(rng.uniform(2.0, 4.0))
        h = float(rng.uniform(*height))
        # each pedestrian gets its own horizontal lane, walkers start at the lane edge
        lane_w = 1920.0 / n_peds
        x0 = lane_w * lanes[i] + lane_w / 2
        if kind != STANDING:
            x0 -= direction * min(lane_w / 2 - 40, speed * n_frames / 2)
        y0 = float(rng.uniform(450.0, 600.0))
        event = None
        if kind == START_WALKING:
            event = int(rng.integers(n_frames // 4, n_frames // 2))
        out.append(
            GaitParams(
                kind=kind,
                speed=speed,
                period=period,
                height=h,
                jitter=jitter,
                start=(float(x0), y0),
                direction=direction,
                event_frame=event,
                phase=float(rng.random()),
            )
        )
    return out
