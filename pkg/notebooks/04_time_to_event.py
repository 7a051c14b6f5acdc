"""
Predictability around the moment a pedestrian starts walking
============================================================

Each pedestrian stands, then starts to cross at a known frame. Curves are
indexed by time-to-event: positive before the event, negative after.
"""
import tempfile

import numpy as np

from crossintent.dataio import TTEAnnotation
from crossintent.evaluation import emit_report
from crossintent.pipeline import PipelineConfig, run_eval, run_predict, run_track, run_train
from crossintent.synth import START_WALKING, GaitParams, generate_sequence, random_scene

rng = np.random.default_rng(4)
train = [generate_sequence(random_scene(rng, 4, 60, jitter=12.0), 60, seed=i, sequence_id=f"tr{i}") for i in range(20)]
cfg = PipelineConfig(T=14, n_trees=40, max_depth=15)
model, _ = run_train(train, cfg)

# %%
seqs, anns = [], []
for i in range(10):
    p = GaitParams(kind=START_WALKING, event_frame=40, jitter=12.0, direction=int(rng.choice([-1, 1])),
                   start=(960.0, 500.0))
    s = run_track(generate_sequence([p], 80, seed=200 + i, sequence_id=f"sw{i}"))
    seqs.append(s)
    anns.append(TTEAnnotation(s.id, 1, 40, "start_walking_to_cross"))
rows = [r for s in seqs for r in run_predict(s, model, cfg)]
report, curves = run_eval(rows, seqs, anns, cfg)
curve = curves["start_walking_to_cross"]
for t in (20, 10, 0, -4, -8, -12, -16):
    print(curve.at(t))

# %% the same numbers as a table plus two SVG plots
out = tempfile.mkdtemp()
for path in emit_report(report, curves, out):
    print(path)
