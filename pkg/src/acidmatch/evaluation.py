"""Precision/recall curves, the class-imbalance demo and match breakdowns.

A pair is declared a match at threshold t when p >= t, so every distinct
predicted probability is itself an exact operating point.
"""

from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .core import ATTRIBUTES, Corpus, ThresholdConfig
from .errors import AcidMatchError
from .similarity import ProfileTable, raw_pairs

PR_HEADER = ("threshold", "tp", "fp", "fn", "tn", "precision", "recall", "tpr", "fpr")
CATEGORIES = ("true_match", "missed_match", "false_match")


@dataclass(frozen=True)
class PrPoint:
    threshold: float
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    tpr: float
    fpr: float


def pr_curve_from_scores(scores, labels, n_thresholds: int = 101, n_positives: Optional[int] = None) -> list[PrPoint]:
    """PR points at evenly spaced thresholds plus every distinct score.

    ``n_positives`` overrides the recall denominator, for pipelines where
    some true matches never reach the scored set.
    """
    p = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=bool)
    if len(p) != len(y):
        raise ValueError("scores and labels differ in length")
    pos_total = int(y.sum()) if n_positives is None else int(n_positives)
    if pos_total < int(y.sum()):
        raise ValueError("n_positives is smaller than the labeled positives")
    neg_total = int((~y).sum())
    th = np.unique(np.concatenate([np.linspace(0.0, 1.0, n_thresholds), p]))
    order = np.argsort(-p, kind="stable")
    ps, ys = p[order], y[order]
    ctp = np.concatenate([[0], np.cumsum(ys)])
    cfp = np.concatenate([[0], np.cumsum(~ys)])
    # number of scores >= t, via the descending order
    k = np.searchsorted(-ps, -th, side="right")
    tp, fp = ctp[k], cfp[k]
    out = []
    for t, a, b in zip(th, tp, fp):
        a, b = int(a), int(b)
        fn, tn = pos_total - a, neg_total - b
        out.append(PrPoint(float(t), a, b, fn, tn,
                           a / (a + b) if a + b else 0.0,
                           a / pos_total if pos_total else 0.0,
                           a / pos_total if pos_total else 0.0,
                           b / neg_total if neg_total else 0.0))
    return out


def pr_curve(model, ds, featurizer, n_thresholds: int = 101) -> list[PrPoint]:
    if len(ds) == 0:
        raise AcidMatchError("cannot build a PR curve from an empty dataset")
    scores = model.predict_matrix(featurizer.pairs(ds.id1, ds.id2))
    return pr_curve_from_scores(scores, ds.label, n_thresholds)


def recall_at_precision(curve: Sequence[PrPoint], target_precision: float) -> float:
    if not curve:
        raise ValueError("empty curve")
    ok = [pt.recall for pt in curve if pt.precision >= target_precision]
    return max(ok) if ok else 0.0


def threshold_at_precision(curve: Sequence[PrPoint], target_precision: float) -> Optional[float]:
    """Lowest threshold reaching the target precision with maximal recall."""
    best = None
    for pt in curve:
        if pt.precision >= target_precision and (best is None or pt.recall > best.recall
                                                 or (pt.recall == best.recall and pt.threshold < best.threshold)):
            best = pt
    return None if best is None else best.threshold


def imbalance_demo(tpr: float, fpr: float, n_pos: int, n_neg: int) -> tuple[float, float, float]:
    if not (0 <= tpr <= 1 and 0 <= fpr <= 1) or n_pos < 0 or n_neg < 0:
        raise ValueError("rates must lie in [0, 1] and counts be >= 0")
    tp, fp = tpr * n_pos, fpr * n_neg
    return tp, fp, (tp / (tp + fp) if tp + fp else 0.0)


def curve_to_csv(curve: Sequence[PrPoint], path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PR_HEADER)
    for pt in curve:
        w.writerow(astuple(pt))
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


@dataclass
class Breakdown:
    """Share of pairs per outcome category with each attribute available and consistent."""

    rows: dict
    counts: dict

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("category", "n") + tuple(a.value for a in ATTRIBUTES))
        for cat in CATEGORIES:
            w.writerow((cat, self.counts[cat]) + tuple(
                "UNKNOWN" if self.rows[cat][a.value] is None else f"{self.rows[cat][a.value]:.6f}"
                for a in ATTRIBUTES))
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def match_breakdown(model, ds, th_p: float, sn1: Corpus, sn2: Corpus,
                    thresholds: ThresholdConfig = ThresholdConfig(), scores=None) -> Breakdown:
    p = model.predict_matrix(_features(ds, sn1, sn2)) if scores is None else np.asarray(scores, dtype=float)
    declared = p >= th_p
    cats = {
        "true_match": ds.label & declared,
        "missed_match": ds.label & ~declared,
        "false_match": ~ds.label & declared,
    }
    t1, t2 = ProfileTable(sn1), ProfileTable(sn2)
    r1, r2 = sn1.positions(ds.id1), sn2.positions(ds.id2)
    passing = {a.value: np.asarray(thresholds.passes(a, raw_pairs(a, t1, r1, t2, r2)), dtype=bool)
               for a in ATTRIBUTES}
    rows, counts = {}, {}
    for cat, mask in cats.items():
        n = int(mask.sum())
        counts[cat] = n
        rows[cat] = {k: (float(v[mask].mean()) if n else None) for k, v in passing.items()}
    return Breakdown(rows, counts)


def _features(ds, sn1, sn2):
    from .similarity import Featurizer

    return Featurizer(sn1, sn2).pairs(ds.id1, ds.id2)


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def emit_pr_svg(curves, path) -> list[Path]:
    """Write an SVG precision-recall plot and one CSV per curve; returns the paths."""
    if isinstance(curves, Mapping):
        items = list(curves.items())
    else:
        items = [("curve", curves)]
    if not items or any(len(c) == 0 for _, c in items):
        raise AcidMatchError("cannot plot an empty curve")
    path = Path(path)
    size, pad = 400, 50
    x = lambda r: pad + r * size
    yv = lambda pr: pad + (1 - pr) * size
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size + 2 * pad + 160}" height="{size + 2 * pad}">',
        f'<rect x="{pad}" y="{pad}" width="{size}" height="{size}" fill="none" stroke="black"/>',
        f'<text x="{pad + size / 2}" y="{size + pad + 35}" text-anchor="middle">recall</text>',
        f'<text x="15" y="{pad + size / 2}" transform="rotate(-90 15 {pad + size / 2})" '
        f'text-anchor="middle">precision</text>',
    ]
    for tick in np.linspace(0, 1, 6):
        parts.append(f'<text x="{x(tick):.1f}" y="{size + pad + 15}" font-size="10" '
                     f'text-anchor="middle">{tick:.1f}</text>')
        parts.append(f'<text x="{pad - 5}" y="{yv(tick) + 3:.1f}" font-size="10" '
                     f'text-anchor="end">{tick:.1f}</text>')
    written = []
    for k, (label, curve) in enumerate(items):
        color = _COLORS[k % len(_COLORS)]
        pts = sorted(curve, key=lambda pt: (pt.recall, -pt.precision))
        coords = " ".join(f"{x(pt.recall):.2f},{yv(pt.precision):.2f}" for pt in pts)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}">'
                     f'<title>{escape(str(label))}</title></polyline>')
        ly = pad + 15 + 18 * k
        parts.append(f'<line x1="{size + pad + 15}" y1="{ly}" x2="{size + pad + 35}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{size + pad + 40}" y="{ly + 4}" font-size="12">{escape(str(label))}</text>')
        csv_path = path.with_suffix(".csv") if len(items) == 1 else path.with_name(f"{path.stem}-{label}.csv")
        curve_to_csv(curve, csv_path)
        written.append(csv_path)
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return [path] + written

