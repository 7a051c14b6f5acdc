"""
One frame versus fourteen
=========================

Keypoint noise hides the leg swing of a walker near mid-stance, so single
frames are ambiguous. A window spanning a full gait cycle is not.
Small forests keep this quick; the acceptance suite uses 400 trees.
"""
import numpy as np

from crossintent.pipeline import PipelineConfig, run_eval, run_predict, run_track, run_train
from crossintent.synth import generate_sequence, random_scene

rng = np.random.default_rng(1)
train = [generate_sequence(random_scene(rng, 4, 60, jitter=12.0), 60, seed=i, sequence_id=f"tr{i}") for i in range(20)]
test = [run_track(generate_sequence(random_scene(rng, 4, 60, jitter=12.0), 60, seed=100 + i, sequence_id=f"te{i}"))
        for i in range(10)]

# %% both models decide on the same frames: those with 14 frames of history
for T in (1, 14):
    cfg = PipelineConfig(T=T, min_history=14, n_trees=40, max_depth=15)
    model, report = run_train(train, cfg)
    rows = [r for s in test for r in run_predict(s, model, cfg)]
    ev, _ = run_eval(rows, test, config=cfg)
    print(f"T={T:2d}: {report['windows']} training windows, accuracy {ev.accuracy:.3f} on {ev.n_decisions} decisions")
