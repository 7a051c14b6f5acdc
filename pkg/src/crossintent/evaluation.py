"""Balanced accuracy, time-to-event (TTE) curves and report files."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataio import TTE_KINDS
from .errors import IoError, MissingAnnotation, SingleClassData, ValidationError
from .forest import C, NC, atomic_write_text

log = logging.getLogger(__name__)


@dataclass
class EvalReport:
    accuracy: float
    tp: int
    tn: int
    fp: int
    fn: int
    n_decisions: int
    positives_before: int
    negatives_before: int
    seed: int
    extra: dict = field(default_factory=dict)

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.tn + self.fp

    def rows(self) -> list[tuple[str, object]]:
        d = asdict(self)
        extra = d.pop("extra")
        out = list(d.items())
        out.insert(out.index(("seed", self.seed)), ("positives", self.positives))
        out.insert(out.index(("seed", self.seed)), ("negatives", self.negatives))
        out.extend(sorted(extra.items()))
        return out


def _as_label(v) -> str:
    if v in (C, NC):
        return v
    if isinstance(v, (bool, np.bool_, int, np.integer)):
        return C if v else NC
    raise ValidationError(f"unknown label {v!r}")


def balanced_accuracy(decisions, seed: int = 0) -> EvalReport:
    """Accuracy over a random P = N subset of ``(predicted, truth)`` decisions.

    Decisions are put in a canonical order before the seeded undersampling,
    so the result does not depend on the order they are given in.
    """
    pairs = sorted((_as_label(t), _as_label(p)) for p, t in decisions)
    truth = np.array([t for t, _ in pairs])
    pred = np.array([p for _, p in pairs])
    pos = np.flatnonzero(truth == C)
    neg = np.flatnonzero(truth == NC)
    if len(pos) == 0 or len(neg) == 0:
        raise SingleClassData(f"need both classes among decisions (C={len(pos)}, NC={len(neg)})")
    n = min(len(pos), len(neg))
    rng = np.random.default_rng(seed)
    if len(pos) > n:
        pos = np.sort(rng.choice(pos, size=n, replace=False))
    if len(neg) > n:
        neg = np.sort(rng.choice(neg, size=n, replace=False))
    tp = int(np.sum(pred[pos] == C))
    tn = int(np.sum(pred[neg] == NC))
    fn = len(pos) - tp
    fp = len(neg) - tn
    total = tp + tn + fp + fn
    return EvalReport(
        accuracy=(tp + tn) / total,
        tp=tp,
        tn=tn,
        fp=fp,
        fn=fn,
        n_decisions=total,
        positives_before=int(np.sum(truth == C)),
        negatives_before=int(np.sum(truth == NC)),
        seed=seed,
    )


@dataclass
class TTECurve:
    kind: str
    tte: np.ndarray  # descending: from before the event to after it
    mean: np.ndarray
    std: np.ndarray
    n: np.ndarray
    predictability: np.ndarray
    threshold: float = 0.5

    def __len__(self):
        return len(self.tte)

    def at(self, tte: int) -> dict:
        i = int(np.flatnonzero(self.tte == tte)[0])
        return {
            "tte": int(self.tte[i]),
            "mean": float(self.mean[i]),
            "std": float(self.std[i]),
            "n": int(self.n[i]),
            "predictability": float(self.predictability[i]),
        }


def tte_curves(probabilities, annotations, threshold: float = 0.5, *, skip_missing: bool = False) -> dict:
    """Aggregate per-frame crossing probabilities around annotated events.

    ``probabilities`` maps ``(sequence, gt_id)`` to ``{frame: p}``. TTE is
    ``event_frame - frame`` (positive before the event). Only TTE values
    covered by every sequence of a kind are reported.
    """
    by_kind: dict[str, list[dict[int, float]]] = {}
    for ann in annotations:
        series = probabilities.get((ann.sequence, ann.gt_id))
        if not series:
            if skip_missing:
                log.warning("no probabilities for annotated pedestrian %s/%s; skipped", ann.sequence, ann.gt_id)
                continue
            raise MissingAnnotation(f"no probabilities for annotated pedestrian {ann.sequence}/{ann.gt_id}")
        by_kind.setdefault(ann.kind, []).append({ann.event_frame - f: float(p) for f, p in series.items()})
    curves = {}
    for kind in sorted(by_kind, key=lambda k: TTE_KINDS.index(k) if k in TTE_KINDS else len(TTE_KINDS)):
        runs = by_kind[kind]
        common = set(runs[0])
        for r in runs[1:]:
            common &= set(r)
        if not common:
            log.warning("no TTE value is covered by all %d %s sequences", len(runs), kind)
            continue
        tte = np.array(sorted(common, reverse=True))
        vals = np.array([[r[t] for r in runs] for t in tte])  # (n_tte, n_seq)
        curves[kind] = TTECurve(
            kind=kind,
            tte=tte,
            mean=vals.mean(axis=1),
            std=vals.std(axis=1),
            n=np.full(len(tte), len(runs)),
            predictability=(vals > threshold).mean(axis=1),
            threshold=threshold,
        )
    return curves


def count_identity_switches(assignments) -> int:
    """Count ground-truth identities whose matched track id changes.

    ``assignments`` holds ``(frame, gt_id, track_id)``; rows without a
    ``track_id`` (unmatched or unconfirmed) are ignored.
    """
    last: dict = {}
    switches = 0
    for frame, gt, trk in sorted(assignments, key=lambda r: (r[0], str(r[1]))):
        if gt is None or trk is None:
            continue
        if gt in last and last[gt] != trk:
            switches += 1
        last[gt] = trk
    return switches


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def format_table(rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, delimiter="\t", lineterminator="\n")
    w.writerow(["metric", "value"])
    for k, v in rows:
        w.writerow([k, _fmt(v)])
    return out.getvalue()


def format_curve(curve: TTECurve) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["tte", "mean", "std", "n", "predictability"])
    for i in range(len(curve)):
        w.writerow([int(curve.tte[i]), _fmt(curve.mean[i]), _fmt(curve.std[i]), int(curve.n[i]),
                    _fmt(curve.predictability[i])])
    return out.getvalue()


def _svg(fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    return buf.getvalue()


def _plots(curve: TTECurve) -> tuple[str, str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    title = curve.kind.replace("_", " ")
    with matplotlib.rc_context({"svg.hashsalt": "crossintent", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.fill_between(curve.tte, np.clip(curve.mean - curve.std, 0, 1), np.clip(curve.mean + curve.std, 0, 1),
                        color="tab:blue", alpha=0.3, linewidth=0)
        ax.plot(curve.tte, curve.mean, color="tab:blue")
        if len(curve) > 1:
            ax.set_xlim(curve.tte.max(), curve.tte.min())  # time runs left to right
        ax.set_ylim(0, 1)
        ax.set_xlabel("TTE (frames)")
        ax.set_ylabel("crossing probability")
        ax.set_title(title)
        fig.tight_layout()
        prob_svg = _svg(fig)
        plt.close(fig)

        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.step(curve.tte, curve.predictability, where="mid", color="tab:red")
        if len(curve) > 1:
            ax.set_xlim(curve.tte.max(), curve.tte.min())
        ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel("TTE (frames)")
        ax.set_ylabel("predictability")
        ax.set_title(f"{title}, threshold {curve.threshold:g}")
        fig.tight_layout()
        pred_svg = _svg(fig)
        plt.close(fig)
    return prob_svg, pred_svg


def emit_report(report: EvalReport, curves: dict, out_dir) -> list[Path]:
    """Write ``results.tsv`` plus, per curve, a CSV of values and two SVG plots."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc
    written = []
    table = out / "results.tsv"
    atomic_write_text(table, format_table(report.rows()))
    written.append(table)
    for kind, curve in sorted(curves.items()):
        if len(curve) == 0:
            continue
        values = out / f"tte_{kind}.csv"
        atomic_write_text(values, format_curve(curve))
        prob_svg, pred_svg = _plots(curve)
        p1 = out / f"tte_{kind}_probability.svg"
        p2 = out / f"tte_{kind}_predictability.svg"
        atomic_write_text(p1, prob_svg)
        atomic_write_text(p2, pred_svg)
        written += [values, p1, p2]
    return written

