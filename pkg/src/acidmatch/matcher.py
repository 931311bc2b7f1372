"""Generic pairwise matching and the at-most-one-match pipeline with abstention."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import expit

from .classifiers import TrainedModel, fit
from .core import Profile
from .errors import AcidMatchError, SingleClassError
from .sampling import BlockingIndex, CandidateSet
from .similarity import featurize

DECISIONS_HEADER = ("probe_id", "outcome", "matched_id", "p1", "p2", "q")


@dataclass(frozen=True)
class MatchDecision:
    probe_id: str
    matched_id: Optional[str]
    p_1st: float
    p_2nd: float
    q: Optional[float] = None

    def __post_init__(self):
        if self.p_2nd > self.p_1st:
            raise ValueError("p_2nd cannot exceed p_1st")

    @property
    def outcome(self) -> str:
        return "Abstain" if self.matched_id is None else "Matched"


def _candidate_features(a1: Profile, ids: Sequence[str], featurizer) -> np.ndarray:
    if not ids:
        return np.empty((0, 5))
    if featurizer is not None and a1.profile_id in featurizer.sn1:
        return featurizer.pairs([a1.profile_id] * len(ids), ids)
    sn2 = featurizer.sn2 if featurizer is not None else None
    if sn2 is None:
        raise AcidMatchError("scoring a probe outside the featurizer's corpus needs a featurizer with sn2")
    return np.vstack([featurize(a1, sn2[i], featurizer.kappa_km).as_array() for i in ids])


def score_candidates(a1: Profile, candidates: CandidateSet, model, featurizer) -> np.ndarray:
    """Log-odds of each candidate; ranking on these survives p rounding to 1."""
    X = _candidate_features(a1, candidates.ids, featurizer)
    return model.decision_function(X) if len(X) else np.zeros(0)


def rank_order(p: np.ndarray, blocking: Sequence[float], ids: Sequence[str]) -> np.ndarray:
    """Indices by p descending, then blocking similarity descending, then id ascending."""
    if len(p) == 0:
        return np.zeros(0, dtype=np.int64)
    id_rank = np.argsort(np.argsort(np.asarray(ids, dtype=str), kind="stable"), kind="stable")
    return np.lexsort((id_rank, -np.asarray(blocking, dtype=float), -np.asarray(p, dtype=float)))


def match_generic(a1: Profile, index: BlockingIndex, model, th_p: float, featurizer, min_sim: float = 0.5,
                  cap: int = 1000) -> list[str]:
    """Every candidate whose p exceeds ``th_p``, most probable first."""
    cs = index.query_many([a1], min_sim, cap)[0]
    s = score_candidates(a1, cs, model, featurizer)
    order = rank_order(s, cs.scores, cs.ids)
    p = expit(s)
    return [cs.ids[i] for i in order if p[i] > th_p]


def top_match(a1: Profile, candidates: CandidateSet, model, featurizer) -> tuple[str, float, float]:
    if len(candidates) == 0:
        raise AcidMatchError("top_match needs a nonempty candidate set")
    p = score_candidates(a1, candidates, model, featurizer)
    order = rank_order(p, candidates.scores, candidates.ids)
    p = expit(p)
    p2 = float(p[order[1]]) if len(order) > 1 else 0.0
    return candidates.ids[order[0]], float(p[order[0]]), p2


def confidence_features(p_1st, p_2nd) -> np.ndarray:
    """(p_1st, p_1st - p_2nd); accepts scalars or equal-length arrays."""
    p1 = np.asarray(p_1st, dtype=float)
    p2 = np.asarray(p_2nd, dtype=float)
    if (p2 > p1).any():
        raise ValueError("confidence features need p_1st >= p_2nd")
    return np.stack([p1, p1 - p2], axis=-1)


@dataclass
class ConfidenceModel:
    model: TrainedModel

    def q(self, p_1st, p_2nd):
        X = np.atleast_2d(confidence_features(p_1st, p_2nd))
        out = self.model.predict_matrix(X)
        return float(out[0]) if np.ndim(p_1st) == 0 else out

    def logit(self, p_1st, p_2nd) -> np.ndarray:
        return self.model.decision_function(np.atleast_2d(confidence_features(p_1st, p_2nd)))


def train_confidence(decisions: Iterable[tuple[float, float, bool]], family: str = "LogisticRegression",
                     seed: int = 0) -> ConfidenceModel:
    rows = list(decisions)
    if not rows:
        raise SingleClassError("no confidence training decisions")
    p1, p2, y = (np.asarray(c) for c in zip(*rows))
    X = confidence_features(p1, p2)
    config = {"log_col": None} if family in ("LogisticRegression", "LinearSVM") else {}
    return ConfidenceModel(fit(family, X, y.astype(bool), config, seed, manifest={"role": "confidence"}))


def match_unique(a1: Profile, index: BlockingIndex, linker, conf: ConfidenceModel, th_q: float, featurizer,
                 min_sim: float = 0.5, cap: int = 1000) -> MatchDecision:
    cs = index.query_many([a1], min_sim, cap)[0]
    return decide_unique(a1, cs, linker, conf, th_q, featurizer)


def decide_unique(a1: Profile, cs: CandidateSet, linker, conf: ConfidenceModel, th_q: float,
                  featurizer) -> MatchDecision:
    if len(cs) == 0:
        return MatchDecision(a1.profile_id, None, 0.0, 0.0, None)
    best, p1, p2 = top_match(a1, cs, linker, featurizer)
    q = conf.q(p1, p2)
    return MatchDecision(a1.profile_id, best if q > th_q else None, p1, p2, q)


@dataclass
class TopMatchTable:
    """Per-probe topmatch results computed in one batch."""

    probe_ids: list
    best_ids: list
    s1: np.ndarray
    s2: np.ndarray

    @property
    def p1(self) -> np.ndarray:
        return expit(self.s1)

    @property
    def p2(self) -> np.ndarray:
        return expit(self.s2)

    def labels(self, gt) -> np.ndarray:
        return np.array([b is not None and gt.is_match(a, b) for a, b in zip(self.probe_ids, self.best_ids)],
                        dtype=bool)

    def decisions(self, conf: Optional[ConfidenceModel] = None, th: float = 0.5) -> list[MatchDecision]:
        q = conf.q(self.p1, self.p2) if conf is not None and len(self.p1) else None
        out = []
        for k, (a, b) in enumerate(zip(self.probe_ids, self.best_ids)):
            if b is None:
                out.append(MatchDecision(a, None, 0.0, 0.0, None))
                continue
            score = float(q[k]) if q is not None else float(self.p1[k])
            out.append(MatchDecision(a, b if score > th else None, float(self.p1[k]), float(self.p2[k]),
                                     float(q[k]) if q is not None else None))
        return out


def topmatch_table(candidate_sets: Sequence[CandidateSet], p_flat: np.ndarray) -> TopMatchTable:
    """Topmatch per probe from candidate sets and their concatenated log-odds."""
    probe_ids, best, p1, p2 = [], [], [], []
    start = 0
    for cs in candidate_sets:
        p = p_flat[start:start + len(cs)]
        start += len(cs)
        probe_ids.append(cs.probe_id)
        if len(cs) == 0:
            best.append(None)
            p1.append(-np.inf)
            p2.append(-np.inf)
            continue
        order = rank_order(p, cs.scores, cs.ids)
        best.append(cs.ids[order[0]])
        p1.append(float(p[order[0]]))
        p2.append(float(p[order[1]]) if len(order) > 1 else -np.inf)
    return TopMatchTable(probe_ids, best, np.asarray(p1), np.asarray(p2))


def score_candidate_sets(candidate_sets: Sequence[CandidateSet], model, featurizer) -> np.ndarray:
    ids1 = [cs.probe_id for cs in candidate_sets for _ in cs.ids]
    ids2 = [i for cs in candidate_sets for i in cs.ids]
    if not ids1:
        return np.zeros(0)
    return model.decision_function(featurizer.pairs(ids1, ids2))


def decisions_to_csv(decisions: Iterable[MatchDecision], path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DECISIONS_HEADER)
    for d in decisions:
        w.writerow((d.probe_id, d.outcome, d.matched_id or "", repr(d.p_1st), repr(d.p_2nd),
                    "" if d.q is None else repr(d.q)))
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text
