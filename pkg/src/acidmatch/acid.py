"""ACID property estimation and the closed-form reliability identities.

Threshold comparisons use one convention everywhere: a pair is declared
consistent (or a match, for the single-attribute threshold classifier) when
``ThresholdConfig.passes`` holds, and a MISSING value never passes. The
"below th" side of the discriminability and non-impersonability estimators
is therefore "does not pass", which keeps them exact complements of the
classifier's decision rule.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import ATTRIBUTES, AttributeKind, Corpus, GroundTruth, Profile, ThresholdConfig
from .errors import (
    DomainError,
    EmptyCorpusError,
    EmptyGroundTruthError,
    NoAvailablePairsError,
    NoImpersonatorLabelsError,
)
from .similarity import ProfileTable, raw_block, raw_pairs

BLOCK_ROWS = 256


def _table(corpus, cache: Optional[dict] = None) -> ProfileTable:
    if isinstance(corpus, ProfileTable):
        return corpus
    if cache is not None:
        key = id(corpus)
        if key not in cache:
            cache[key] = ProfileTable(corpus)
        return cache[key]
    return ProfileTable(corpus)


def _matched_raw(gt: GroundTruth, sn1: Corpus, sn2: Corpus, attr: AttributeKind):
    if len(gt) == 0:
        raise EmptyGroundTruthError("ground truth is empty")
    pairs = list(gt)
    rows1 = sn1.positions(a for a, _ in pairs)
    rows2 = sn2.positions(b for _, b in pairs)
    return raw_pairs(attr, _table(sn1), rows1, _table(sn2), rows2)


def estimate_availability(gt: GroundTruth, sn1: Corpus, sn2: Corpus, attr: AttributeKind) -> float:
    """Fraction of matching pairs with the attribute present on both sides."""
    raw = _matched_raw(gt, sn1, sn2, attr)
    return float(np.mean(~np.isnan(raw)))


def estimate_consistency(gt, sn1, sn2, attr: AttributeKind, th: ThresholdConfig) -> float:
    raw = _matched_raw(gt, sn1, sn2, attr)
    avail = ~np.isnan(raw)
    if not avail.any():
        raise NoAvailablePairsError(f"no matching pair has {attr.value} on both sides")
    return float(np.mean(th.passes(attr, raw[avail])))


def _orient(attr: AttributeKind, raw: np.ndarray) -> np.ndarray:
    # larger is always "more similar"; NaN stays NaN
    return -raw if attr is AttributeKind.LOCATION else raw


def _unorient(attr: AttributeKind, best: np.ndarray) -> np.ndarray:
    return -best if attr is AttributeKind.LOCATION else best


def _rowmax(block: np.ndarray) -> np.ndarray:
    """Row maxima ignoring NaN; NaN for rows with nothing available."""
    filled = np.where(np.isnan(block), -np.inf, block)
    best = filled.max(axis=1) if block.shape[1] else np.full(len(block), -np.inf)
    best[best == -np.inf] = np.nan
    return best


def _probe_corpus(probes) -> Corpus:
    return probes if isinstance(probes, Corpus) else Corpus(probes)


def best_nonmatch_scores(
    probes: Sequence[Profile] | Corpus,
    sn2: Corpus,
    attr: AttributeKind,
    gt: GroundTruth,
    exclude_impersonators: bool = False,
    _tables: Optional[dict] = None,
) -> np.ndarray:
    """Most similar non-matching raw score per probe, exhaustive over ``sn2``.

    Returns native units (minimum distance for location) with NaN where no
    non-matching profile has the attribute available. Matching profiles
    per ``gt`` are excluded, and the probe's own impersonators too when
    requested.
    """
    if len(sn2) == 0:
        raise EmptyCorpusError("sn2 is empty")
    probe_corpus = _probe_corpus(probes)
    t1 = _table(probe_corpus, _tables)
    t2 = _table(sn2, _tables)
    imp = _impersonator_index(sn2) if exclude_impersonators else {}
    out = np.full(len(probe_corpus), np.nan)
    for start in range(0, len(probe_corpus), BLOCK_ROWS):
        rows = np.arange(start, min(start + BLOCK_ROWS, len(probe_corpus)))
        block = _orient(attr, raw_block(attr, t1, rows, t2))
        for k, r in enumerate(rows):
            pid = probe_corpus.profiles[r].profile_id
            for m in gt.matches_of(pid):
                if m in sn2:
                    block[k, sn2.position(m)] = np.nan
            cols = imp.get(pid)
            if cols:
                block[k, cols] = np.nan
        out[rows] = _rowmax(block)
    return _unorient(attr, out)


def estimate_discriminability(
    probes,
    sn2: Corpus,
    attr: AttributeKind,
    th: ThresholdConfig,
    gt: GroundTruth = GroundTruth(),
) -> float:
    """Effective discriminability: probes whose best non-match does not pass th."""
    best = best_nonmatch_scores(probes, sn2, attr, gt)
    if len(best) == 0:
        raise EmptyCorpusError("no probes")
    return float(np.mean(~th.passes(attr, best)))


def estimate_discriminabilities(probes, sn2: Corpus, attr: AttributeKind, th: ThresholdConfig,
                                gt: GroundTruth = GroundTruth()) -> tuple[float, float]:
    """``(D_tilde, D)`` from a single exhaustive pass.

    D is conditional on the probe not being impersonated. For such a probe
    no impersonator enters the max, so D is the D_tilde indicator averaged
    over the non-impersonated probes.
    """
    probe_corpus = _probe_corpus(probes)
    if len(probe_corpus) == 0:
        raise EmptyCorpusError("no probes")
    below = ~th.passes(attr, best_nonmatch_scores(probe_corpus, sn2, attr, gt))
    imp = _impersonator_index(sn2)
    clean = np.array([p.profile_id not in imp for p in probe_corpus], dtype=bool)
    if not clean.any():
        raise EmptyCorpusError("every probe is impersonated; D is undefined")
    return float(np.mean(below)), float(np.mean(below[clean]))


def estimate_discriminability_without_impersonators(probes, sn2, attr, th, gt=GroundTruth()) -> float:
    """D: discriminability over the probes nobody impersonates."""
    return estimate_discriminabilities(probes, sn2, attr, th, gt)[1]


def _impersonator_index(sn2: Corpus) -> dict[str, list[int]]:
    index: dict[str, list[int]] = {}
    for i, p in enumerate(sn2):
        if p.is_impersonator_of is not None:
            index.setdefault(p.is_impersonator_of, []).append(i)
    return index


def estimate_non_impersonability(
    probes,
    sn2: Corpus,
    attr: AttributeKind,
    th: ThresholdConfig,
    labeled: Optional[bool] = None,
) -> tuple[float, float]:
    """Return ``(nI, p_I)``.

    ``labeled`` says whether ``sn2`` carries impersonator labels; by default
    it is inferred from the presence of at least one label. Unlabeled
    corpora raise :class:`NoImpersonatorLabelsError`. With no impersonated
    probe, nI is 1 (vacuous max).
    """
    if labeled is None:
        labeled = sn2.has_impersonator_labels
    if not labeled:
        raise NoImpersonatorLabelsError("sn2 carries no impersonator labels")
    probe_corpus = probes if isinstance(probes, Corpus) else Corpus(probes)
    if len(probe_corpus) == 0:
        raise EmptyCorpusError("no probes")
    index = _impersonator_index(sn2)
    rows1, rows2, owner = [], [], []
    impersonated = 0
    for i, p in enumerate(probe_corpus):
        hits = index.get(p.profile_id)
        if hits:
            impersonated += 1
            rows1.extend([i] * len(hits))
            rows2.extend(hits)
            owner.extend([impersonated - 1] * len(hits))
    p_i = impersonated / len(probe_corpus)
    if impersonated == 0:
        return 1.0, 0.0
    raw = raw_pairs(attr, ProfileTable(probe_corpus), rows1, ProfileTable(sn2), rows2)
    caught = np.zeros(impersonated, dtype=bool)
    np.logical_or.at(caught, np.asarray(owner), th.passes(attr, raw))
    return float(np.mean(~caught)), p_i


# --- closed forms -------------------------------------------------------------

def _check_unit(name, value):
    if not (0.0 <= value <= 1.0):
        raise DomainError(f"{name}={value} outside [0, 1]")


def theorem_recall(availability: float, consistency: float) -> float:
    """Recall of the single-attribute threshold classifier: C * A."""
    _check_unit("A", availability)
    _check_unit("C", consistency)
    return consistency * availability


def precision_upper_bound(recall: float, d_tilde: float) -> float:
    """recall / (recall + 1 - D~), defined as 0 at zero recall."""
    _check_unit("recall", recall)
    _check_unit("D_tilde", d_tilde)
    if recall == 0:
        return 0.0
    # grouping keeps the ratio <= 1 in floating point
    return recall / (recall + (1.0 - d_tilde))


def effective_discriminability(d: float, n_i: float, p_i: float) -> float:
    """D * ((1 - p_I) + nI * p_I), valid when impersonators are independent."""
    _check_unit("D", d)
    _check_unit("nI", n_i)
    _check_unit("p_I", p_i)
    return d * ((1.0 - p_i) + n_i * p_i)


# --- single-attribute threshold classifier -----------------------------------

@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    tp: int
    fp: int
    fn: int
    recall: float
    precision: float
    d_tilde: float

    @property
    def bound(self) -> float:
        return precision_upper_bound(self.recall, self.d_tilde)


def threshold_sweep(
    gt: GroundTruth,
    probes: Corpus,
    sn2: Corpus,
    attr: AttributeKind,
    thresholds: Iterable[float],
    base: ThresholdConfig = ThresholdConfig(),
) -> list[SweepPoint]:
    """Exhaustive confusion counts of "declare match iff passes(th)".

    Every probe is compared with every profile of ``sn2``; recall is over
    the ground-truth pairs of the probes, precision over all declared
    pairs, and D~ is estimated on the same probes at the same threshold.
    """
    thresholds = [float(t) for t in thresholds]
    ths = [_with_threshold(base, attr, t) for t in thresholds]
    t1, t2 = ProfileTable(probes), ProfileTable(sn2)
    tp = np.zeros(len(ths), dtype=np.int64)
    fp = np.zeros(len(ths), dtype=np.int64)
    n_pos = 0
    best = np.full(len(probes), np.nan)
    for start in range(0, len(probes), BLOCK_ROWS):
        rows = np.arange(start, min(start + BLOCK_ROWS, len(probes)))
        block = raw_block(attr, t1, rows, t2)
        pos_mask = np.zeros(block.shape, dtype=bool)
        for k, r in enumerate(rows):
            for m in gt.matches_of(probes.profiles[r].profile_id):
                if m in sn2:
                    pos_mask[k, sn2.position(m)] = True
        n_pos += int(pos_mask.sum())
        pos_vals = block[pos_mask]
        neg = np.where(pos_mask, np.nan, block)
        oriented = _orient(attr, neg)
        with np.errstate(all="ignore"):
            has = ~np.all(np.isnan(oriented), axis=1)
        b = np.full(len(rows), np.nan)
        if has.any():
            b[has] = np.nanmax(oriented[has], axis=1)
        best[rows] = _unorient(attr, b)
        neg_vals = neg[~np.isnan(neg)]
        for j, th in enumerate(ths):
            tp[j] += int(np.count_nonzero(th.passes(attr, pos_vals)))
            fp[j] += int(np.count_nonzero(th.passes(attr, neg_vals)))
    points = []
    for j, (t, th) in enumerate(zip(thresholds, ths)):
        recall = tp[j] / n_pos if n_pos else 0.0
        declared = tp[j] + fp[j]
        precision = tp[j] / declared if declared else 0.0
        d_tilde = float(np.mean(~th.passes(attr, best)))
        points.append(SweepPoint(t, int(tp[j]), int(fp[j]), int(n_pos - tp[j]), float(recall), float(precision), d_tilde))
    return points


def _with_threshold(base: ThresholdConfig, attr: AttributeKind, value: float) -> ThresholdConfig:
    name = {
        AttributeKind.REAL_NAME: "real_name",
        AttributeKind.SCREEN_NAME: "screen_name",
        AttributeKind.LOCATION: "location_km",
        AttributeKind.PHOTO: "photo",
        AttributeKind.FRIENDS: "friends",
    }[attr]
    kw = {
        "real_name": base.real_name,
        "screen_name": base.screen_name,
        "location_km": base.location_km,
        "photo": base.photo,
        "friends": base.friends,
    }
    kw[name] = int(value) if attr is AttributeKind.FRIENDS else value
    return ThresholdConfig(**kw)


# --- report -------------------------------------------------------------------

@dataclass(frozen=True)
class AttributeEstimate:
    attribute: AttributeKind
    availability: float
    consistency: Optional[float]
    non_impersonability: Optional[float]
    d_tilde: float
    threshold: float


@dataclass(frozen=True)
class AcidReport:
    rows: tuple[AttributeEstimate, ...]
    thresholds: ThresholdConfig
    impersonation_rate: Optional[float]
    n_pairs: int
    n_probes: int
    n_sn2: int
    extra: dict = field(default_factory=dict)

    CSV_HEADER = ("attribute", "A", "C", "nI", "D_tilde", "th", "p_I")

    def __getitem__(self, attr: AttributeKind) -> AttributeEstimate:
        for row in self.rows:
            if row.attribute is attr:
                return row
        raise KeyError(attr)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_HEADER)
        fmt = lambda v: "UNKNOWN" if v is None else repr(float(v))
        for r in self.rows:
            w.writerow([r.attribute.value, fmt(r.availability), fmt(r.consistency), fmt(r.non_impersonability),
                        fmt(r.d_tilde), fmt(r.threshold), fmt(self.impersonation_rate)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def format_table(self) -> str:
        pct = lambda v: "UNKNOWN" if v is None else f"{100 * v:6.1f}%"
        lines = [
            f"ACID report: {self.n_pairs} matching pairs, {self.n_probes} probes, |SN2| = {self.n_sn2}",
            f"{'attribute':<11} {'A':>8} {'C':>8} {'nI':>8} {'D~':>8} {'th':>7}",
        ]
        for r in self.rows:
            lines.append(f"{r.attribute.value:<11} {pct(r.availability):>8} {pct(r.consistency):>8} "
                         f"{pct(r.non_impersonability):>8} {pct(r.d_tilde):>8} {r.threshold:>7g}")
        lines.append(f"p_I = {pct(self.impersonation_rate).strip()}")
        return "\n".join(lines)


def acid_report(
    gt: GroundTruth,
    sn1: Corpus,
    sn2: Corpus,
    th: ThresholdConfig = ThresholdConfig(),
    probes: Optional[Corpus] = None,
    impersonator_labels: Optional[bool] = None,
) -> AcidReport:
    """All four properties for all five attributes.

    ``probes`` defaults to the sn1 profiles that appear in ``gt``.
    Consistency is UNKNOWN for attributes never available on both sides;
    nI and p_I are UNKNOWN without impersonator labels.
    """
    if len(gt) == 0:
        raise EmptyGroundTruthError("ground truth is empty")
    if probes is None:
        probes = Corpus(sn1[i] for i in sorted(gt.by_sn1))
    tables: dict = {}
    rows = []
    p_i = None
    for attr in ATTRIBUTES:
        a = estimate_availability(gt, sn1, sn2, attr)
        try:
            c = estimate_consistency(gt, sn1, sn2, attr, th)
        except NoAvailablePairsError:
            c = None
        best = best_nonmatch_scores(probes, sn2, attr, gt, _tables=tables)
        d_tilde = float(np.mean(~th.passes(attr, best)))
        try:
            n_i, p_i = estimate_non_impersonability(probes, sn2, attr, th, labeled=impersonator_labels)
        except NoImpersonatorLabelsError:
            n_i = None
        rows.append(AttributeEstimate(attr, a, c, n_i, d_tilde, float(th.value(attr))))
    return AcidReport(tuple(rows), th, p_i, len(gt), len(probes), len(sn2))
