"""Random-Sampled and Emulated-Large pair datasets, name blocking, balancing."""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from rapidfuzz import process
from rapidfuzz.distance import Jaro

from .core import Corpus, GroundTruth, Profile
from .errors import AcidMatchError, InsufficientDataError, ParseError, SingleClassError
from .rng import stream
from .similarity import normalize_name

PROVENANCES = ("random_sampled", "emulated_large", "enriched_training")
MATCH, NON_MATCH = "match", "non-match"


class PairDataset:
    """Labeled (sn1_id, sn2_id) pairs, stored column-wise.

    ``score`` holds the blocking similarity for Emulated-Large pairs and is
    NaN elsewhere. ``meta`` carries run facts such as the containment rate.
    """

    def __init__(self, id1, id2, label, provenance, score=None, meta: Optional[dict] = None):
        self.id1 = np.asarray(id1, dtype=object)
        self.id2 = np.asarray(id2, dtype=object)
        self.label = np.asarray(label, dtype=bool)
        n = len(self.id1)
        if isinstance(provenance, str):
            provenance = [provenance] * n
        self.provenance = np.asarray(provenance, dtype=object)
        self.score = np.full(n, np.nan) if score is None else np.asarray(score, dtype=float)
        if not (len(self.id2) == len(self.label) == len(self.provenance) == len(self.score) == n):
            raise ValueError("PairDataset columns differ in length")
        bad = set(self.provenance.tolist()) - set(PROVENANCES)
        if bad:
            raise ValueError(f"unknown provenance {sorted(bad)}")
        self.meta = dict(meta or {})

    @classmethod
    def empty(cls, provenance: str = "random_sampled") -> "PairDataset":
        return cls([], [], [], provenance)

    def __len__(self) -> int:
        return len(self.id1)

    def __iter__(self):
        for a, b, y, p in zip(self.id1, self.id2, self.label, self.provenance):
            yield a, b, (MATCH if y else NON_MATCH), p

    def __eq__(self, other):
        if not isinstance(other, PairDataset):
            return NotImplemented
        return (len(self) == len(other) and (self.id1 == other.id1).all() and (self.id2 == other.id2).all()
                and (self.label == other.label).all() and (self.provenance == other.provenance).all())

    @property
    def n_pos(self) -> int:
        return int(self.label.sum())

    @property
    def n_neg(self) -> int:
        return len(self) - self.n_pos

    def pairs(self) -> list[tuple[str, str]]:
        return list(zip(self.id1.tolist(), self.id2.tolist()))

    def take(self, idx) -> "PairDataset":
        idx = np.asarray(idx)
        return PairDataset(self.id1[idx], self.id2[idx], self.label[idx], self.provenance[idx],
                           self.score[idx], self.meta)

    def relabel(self, provenance: str) -> "PairDataset":
        return PairDataset(self.id1, self.id2, self.label, provenance, self.score, self.meta)

    @staticmethod
    def concat(parts: Sequence["PairDataset"], dedup: bool = True) -> "PairDataset":
        """Concatenate; with ``dedup`` the first occurrence of a pair wins."""
        if not parts:
            return PairDataset.empty()
        cols = [np.concatenate([getattr(p, c) for p in parts]) for c in ("id1", "id2", "label", "provenance", "score")]
        ds = PairDataset(*cols)
        if dedup and len(ds):
            seen, keep = set(), []
            for i, key in enumerate(zip(ds.id1, ds.id2)):
                if key not in seen:
                    seen.add(key)
                    keep.append(i)
            ds = ds.take(np.asarray(keep, dtype=np.int64))
        return ds

    def validate(self, gt: GroundTruth) -> None:
        if len(set(zip(self.id1, self.id2))) != len(self):
            raise AcidMatchError("PairDataset contains duplicate pairs")
        for a, b, y in zip(self.id1, self.id2, self.label):
            if gt.is_match(a, b) != bool(y):
                raise AcidMatchError(f"label of ({a}, {b}) disagrees with ground truth")

    def split(self, fraction: float, seed: int) -> tuple["PairDataset", "PairDataset"]:
        """Stratified random split; the first part holds ``fraction`` of each class."""
        rng = stream(seed, "split")
        first = []
        for cls in (True, False):
            idx = np.flatnonzero(self.label == cls)
            idx = rng.permutation(idx)
            first.append(idx[: int(round(fraction * len(idx)))])
        mask = np.zeros(len(self), dtype=bool)
        mask[np.concatenate(first)] = True
        return self.take(np.flatnonzero(mask)), self.take(np.flatnonzero(~mask))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("id1", "id2", "label", "provenance"))
        for row in self:
            w.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "PairDataset":
        id1, id2, label, prov = [], [], [], []
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["id1", "id2", "label", "provenance"]:
                raise ParseError(path, 1, "expected header id1,id2,label,provenance")
            for lineno, row in enumerate(reader, start=2):
                if len(row) != 4 or row[2] not in (MATCH, NON_MATCH) or row[3] not in PROVENANCES:
                    raise ParseError(path, lineno, f"malformed pair row {row!r}")
                id1.append(row[0])
                id2.append(row[1])
                label.append(row[2] == MATCH)
                prov.append(row[3])
        return cls(id1, id2, label, prov)

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()


@dataclass(frozen=True)
class CandidateSet:
    probe_id: str
    ids: tuple[str, ...]
    scores: tuple[float, ...]

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(zip(self.ids, self.scores))


def build_random_sampled(gt: GroundTruth, sn1: Corpus, sn2: Corpus, n_pos: int, seed: int) -> PairDataset:
    """All n_pos x n_pos combinations of ``n_pos`` sampled matching pairs."""
    pairs = list(gt)
    if n_pos < 1 or len(pairs) < n_pos:
        raise InsufficientDataError(f"need {n_pos} matching pairs, ground truth has {len(pairs)}")
    rng = stream(seed, "random-sampled")
    chosen = [pairs[i] for i in np.sort(rng.choice(len(pairs), size=n_pos, replace=False))]
    left = np.array([a for a, _ in chosen], dtype=object)
    right = np.array([b for _, b in chosen], dtype=object)
    id1 = np.repeat(left, n_pos)
    id2 = np.tile(right, n_pos)
    label = np.fromiter((gt.is_match(a, b) for a, b in zip(id1, id2)), dtype=bool, count=len(id1))
    return PairDataset(id1, id2, label, "random_sampled")


class BlockingIndex:
    """Name blocking over SN2 that emulates a people-search API.

    Distinct case-folded real names and screen names each map to the
    profiles carrying them. A query scores every distinct name with Jaro
    and keeps those at or above ``min_sim``; because the scan covers the
    whole vocabulary the result equals the brute-force scan exactly.
    """

    def __init__(self, sn2: Corpus, workers: int = 1):
        if len(sn2) == 0:
            raise AcidMatchError("cannot index an empty corpus")
        self.corpus = sn2
        # scoring threads; results do not depend on this
        self.workers = int(workers)
        self.ids = np.asarray(sn2.ids, dtype=object)
        self.id_rank = np.argsort(np.argsort(self.ids.astype(str), kind="stable"), kind="stable")
        self.fields = {}
        for fname, values in (("real", [normalize_name(p.real_name) for p in sn2]),
                              ("screen", [normalize_name(p.screen_name) for p in sn2])):
            vocab, inverse = np.unique(np.asarray(values, dtype=object), return_inverse=True)
            self.fields[fname] = (list(vocab), inverse.ravel(), np.asarray([not v for v in vocab]))

    def __len__(self):
        return len(self.ids)

    def _field_scores(self, fname: str, queries: list[str], min_sim: float) -> np.ndarray:
        """Per-profile Jaro of each query against one name field; an empty name scores 0, as in jaro."""
        vocab, inverse, empty_vocab = self.fields[fname]
        m = process.cdist(queries, vocab, scorer=Jaro.normalized_similarity, score_cutoff=min_sim,
                          dtype=np.float64, workers=self.workers)
        m[:, empty_vocab] = 0.0
        m[np.asarray([not q for q in queries], dtype=bool)] = 0.0
        return m[:, inverse]

    def query_many(self, probes: Sequence[Profile], min_sim: float = 0.5, cap: int = 1000,
                   chunk: int = 256) -> list[CandidateSet]:
        if not (0.0 <= min_sim <= 1.0):
            raise ValueError("min_sim must lie in [0, 1]")
        result = []
        for start in range(0, len(probes), chunk):
            block = probes[start:start + chunk]
            real = self._field_scores("real", [normalize_name(p.real_name) for p in block], min_sim)
            screen = self._field_scores("screen", [normalize_name(p.screen_name) for p in block], min_sim)
            merged = np.maximum(real, screen)
            for p, row in zip(block, merged):
                hit = np.flatnonzero(row >= min_sim)
                hit = hit[np.lexsort((self.id_rank[hit], -row[hit]))][:cap]
                result.append(CandidateSet(p.profile_id, tuple(self.ids[hit].tolist()),
                                           tuple(row[hit].tolist())))
        return result


def build_name_index(sn2: Corpus, workers: int = 1) -> BlockingIndex:
    return BlockingIndex(sn2, workers)


def candidate_set(a1: Profile, index: BlockingIndex, min_sim: float = 0.5, cap: int = 1000) -> CandidateSet:
    return index.query_many([a1], min_sim, cap)[0]


def build_emulated_large(probes: Iterable[Profile], index: BlockingIndex, gt: GroundTruth, min_sim: float = 0.5,
                         cap: int = 1000, include_unsampled: bool = False) -> PairDataset:
    """Pairs of every probe with its candidate set, labeled from ``gt``.

    ``meta['containment_rate']`` is the share of probes with a match whose
    match was retrieved; it is None when no probe has a match.
    """
    probes = list(probes)
    sets = index.query_many(probes, min_sim, cap)
    id1, id2, label, score = [], [], [], []
    with_match = contained = 0
    for cs in sets:
        truth = set(gt.matches_of(cs.probe_id))
        found = truth.intersection(cs.ids)
        if truth:
            with_match += 1
            contained += bool(found)
        for cid, s in cs:
            id1.append(cs.probe_id)
            id2.append(cid)
            label.append(cid in truth)
            score.append(s)
        if include_unsampled:
            for m in sorted(truth - found):
                id1.append(cs.probe_id)
                id2.append(m)
                label.append(True)
                score.append(np.nan)
    meta = {
        "containment_rate": contained / with_match if with_match else None,
        "n_probes": len(probes),
        "n_probes_with_match": with_match,
        "mean_candidates": float(np.mean([len(cs) for cs in sets])) if sets else 0.0,
    }
    return PairDataset(id1, id2, label, "emulated_large", score, meta)


def undersample(ds: PairDataset, seed: int) -> PairDataset:
    """Keep every positive and sample negatives down to the positive count."""
    pos = np.flatnonzero(ds.label)
    neg = np.flatnonzero(~ds.label)
    if len(pos) == 0:
        raise SingleClassError("cannot under-sample a dataset without positives")
    if len(neg) <= len(pos):
        return ds
    rng = stream(seed, "undersample")
    keep = np.sort(np.concatenate([pos, rng.choice(neg, size=len(pos), replace=False)]))
    return ds.take(keep)


def build_enriched_training(gt: GroundTruth, random_ds: PairDataset, emulated_ds: PairDataset, n: int,
                            seed: int) -> PairDataset:
    """n positives, n random negatives and n similar-name negatives, deduplicated."""
    rng = stream(seed, "enriched")
    pos = np.flatnonzero(random_ds.label)
    rneg = np.flatnonzero(~random_ds.label)
    eneg = np.flatnonzero(~emulated_ds.label)
    if len(pos) < n:
        raise InsufficientDataError(f"need {n} positives, have {len(pos)}")
    if len(rneg) < n or len(eneg) < n:
        raise InsufficientDataError(
            f"need {n} negatives from each source, have {len(rneg)} random and {len(eneg)} emulated")
    parts = [random_ds.take(np.sort(rng.choice(pos, n, replace=False))),
             random_ds.take(np.sort(rng.choice(rneg, n, replace=False))),
             emulated_ds.take(np.sort(rng.choice(eneg, n, replace=False)))]
    out = PairDataset.concat([p.relabel("enriched_training") for p in parts])
    out.meta = {"requested": 3 * n, "deduplicated": 3 * n - len(out)}
    return out
