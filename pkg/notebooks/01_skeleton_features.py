"""
Geometric skeleton features
===========================

A frame of nine body keypoints becomes 396 numbers: offsets, distances and
directions for every pair, interior angles for every triplet.
"""
import numpy as np

from crossintent.features import FRAME_DIM, feature_names, skeleton_features, track_frame_features
from crossintent.geometry import Skeleton
from crossintent.pipeline import window_matrix
from crossintent.synth import GaitParams, STANDING, generate_sequence

# %% one synthetic walker, no keypoint noise
seq = generate_sequence([GaitParams(period=14)], 30, seed=0)
skel = seq.observations[3].skeleton
f = skeleton_features(skel).values
print(FRAME_DIM, "features per frame")
for name, value in list(zip(feature_names(), f))[:8]:
    print(f"{name:32s} {value: .4f}")

# %% scaling and shifting the skeleton leaves the features unchanged
pts = skel.points.copy()
pts[:, :2] = pts[:, :2] * 3.7 + (-250.0, 4000.0)
g = skeleton_features(Skeleton(pts)).values
print("largest change after scale + shift:", np.abs(f - g).max())

# %% a walker passes the standing pose twice per gait cycle
stand = generate_sequence([GaitParams(kind=STANDING)], 1, seed=0).observations[0].skeleton
d = [np.abs(skeleton_features(o.skeleton).values - skeleton_features(stand).values).mean() for o in seq.observations[:15]]
print("distance to standing pose per frame:", np.round(d, 3))

# %% windows concatenate T consecutive frames, oldest first
F = track_frame_features([o.frame for o in seq.observations], [o.skeleton for o in seq.observations])
W = window_matrix(F, 14, np.arange(13, len(F)))
print("windows:", W.shape)
