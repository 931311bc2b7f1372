"""End-to-end experiment scenarios shared by the CLI and the acceptance suite.

A scenario generates one synthetic world and carves SN1 into disjoint
probe groups: the Random-Sampled group (training and its own test
split), a confidence-training group, and the Emulated-Large test group.
Recall in pipeline comparisons always uses the same denominator, the
number of test probes that have a ground-truth match.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .classifiers import FAMILIES, TrainedModel, fit
from .core import GroundTruth
from .datagen import GenConfig, SyntheticWorld, generate, remove_matches
from .errors import InsufficientDataError
from .evaluation import pr_curve_from_scores, recall_at_precision, threshold_at_precision
from .matcher import ConfidenceModel, score_candidate_sets, topmatch_table, train_confidence
from .rng import stream
from .sampling import (
    BlockingIndex,
    PairDataset,
    build_emulated_large,
    build_enriched_training,
    build_name_index,
    build_random_sampled,
    undersample,
)
from .similarity import Featurizer


def scenario_config(n: int = 10_000, seed: int = 0, **overrides) -> GenConfig:
    """Zipf-name world where names are consistent but rarely unique.

    Four filler profiles per person crowd SN2 with namesakes, and 40% of
    SN1 users have no SN2 account, so a unique-match pipeline has to
    abstain often.
    """
    base = dict(
        n=n,
        seed=seed,
        filler=4 * n,
        matched_fraction=0.6,
        availability={
            "RealName": {"sn1": 0.95, "sn2": 0.95, "correlation": 0.0},
            "Location": {"sn1": 0.5, "sn2": 0.5, "correlation": 0.3},
            "Photo": {"sn1": 0.6, "sn2": 0.6, "correlation": 0.2},
            "Friends": {"sn1": 0.3, "sn2": 0.3, "correlation": 0.3},
        },
        consistency={"RealName": 0.95, "ScreenName": 0.9, "Location": 0.6, "Photo": 0.5, "Friends": 0.6},
        name_edit_ops=(0.8, 0.2),
        n_forenames=1000,
        n_surnames=3000,
        zipf_exponent=0.8,
        screen_digits_prob=0.6,
        freeform_screen_prob=0.4,
        surname_city_affinity=0.7,
        impersonation_rate=0.01,
    )
    base.update(overrides)
    return GenConfig.from_json(base)


@dataclass
class ScenarioSettings:
    n_random: int = 1000
    n_confidence: int = 1500
    n_test: int = 2000
    min_sim: float = 0.8
    cap: int = 300
    train_fraction: float = 0.7
    # "profiles" splits the sampled matching pairs before crossing them, so
    # no profile appears on both sides of the split
    split: str = "profiles"


@dataclass
class Scenario:
    world: SyntheticWorld
    settings: ScenarioSettings
    featurizer: Featurizer
    random_train: PairDataset
    random_test: PairDataset
    el_train: PairDataset
    el_test: PairDataset
    confidence_probes: list
    test_probes: list
    index: object
    seed: int
    _cache: dict = field(default_factory=dict)

    @property
    def gt(self) -> GroundTruth:
        return self.world.gt

    def n_test_with_match(self) -> int:
        return sum(1 for p in self.test_probes if self.gt.matches_of(p.profile_id))


def build_scenario(cfg: GenConfig, settings: ScenarioSettings = ScenarioSettings()) -> Scenario:
    return scenario_from_world(generate(cfg), settings, cfg.seed)


def scenario_from_world(world: SyntheticWorld, settings: ScenarioSettings, seed: int,
                        index: Optional[BlockingIndex] = None) -> Scenario:
    sn1, sn2, gt = world
    s = settings
    rs_full = build_random_sampled(gt, sn1, sn2, s.n_random, seed)
    if s.split == "pairs":
        rs_train, rs_test = rs_full.split(s.train_fraction, seed)
    else:
        rs_train, rs_test = split_by_profiles(rs_full, s.train_fraction, seed)
    used = set(rs_full.id1.tolist())
    rest = [p for p in sn1 if p.profile_id not in used]
    order = stream(seed, "probe-groups").permutation(len(rest))
    rest = [rest[i] for i in order]
    if len(rest) < s.n_confidence + s.n_test:
        raise InsufficientDataError("corpus too small for the requested probe groups")
    conf_probes = rest[: s.n_confidence]
    test_probes = rest[s.n_confidence: s.n_confidence + s.n_test]
    index = index if index is not None else build_name_index(sn2)
    train_probes = [sn1[i] for i in sorted(used)]
    el_train = build_emulated_large(train_probes, index, gt, s.min_sim, s.cap)
    el_test = build_emulated_large(test_probes, index, gt, s.min_sim, s.cap)
    return Scenario(world, s, Featurizer(sn1, sn2), rs_train, rs_test, el_train, el_test,
                    conf_probes, test_probes, index, seed)


def split_by_profiles(ds: PairDataset, fraction: float, seed: int) -> tuple[PairDataset, PairDataset]:
    """Split the probes of a Random-Sampled set and keep within-part combinations only."""
    probes = np.unique(ds.id1[ds.label])
    chosen = stream(seed, "profile-split").permutation(len(probes))[: int(round(fraction * len(probes)))]
    train1 = set(probes[chosen].tolist())
    train2 = set(ds.id2[ds.label & np.isin(ds.id1, list(train1))].tolist())
    in1 = np.isin(ds.id1, list(train1))
    in2 = np.isin(ds.id2, list(train2))
    return ds.take(np.flatnonzero(in1 & in2)), ds.take(np.flatnonzero(~in1 & ~in2))


def _scores(scn: Scenario, model, ds: PairDataset) -> np.ndarray:
    return model.decision_function(scn.featurizer.pairs(ds.id1, ds.id2))


# missing-value handling per family as in the original study
EXPERIMENT_STRATEGY = {"DecisionTree": "impute_negative_one"}


def train_family(scn: Scenario, family: str, ds: PairDataset) -> TrainedModel:
    X = scn.featurizer.pairs(ds.id1, ds.id2)
    return fit(family, X, ds.label, seed=scn.seed, strategy=EXPERIMENT_STRATEGY.get(family),
               manifest={"provenance": sorted(set(ds.provenance.tolist()))})


def collapse(scn: Scenario, target: float = 0.95, families=FAMILIES) -> dict:
    """Recall at ``target`` precision on the Random-Sampled vs Emulated-Large test sets."""
    train = undersample(scn.random_train, scn.seed)
    out = {}
    for fam in families:
        model = train_family(scn, fam, train)
        rs = recall_at_precision(pr_curve_from_scores(_scores(scn, model, scn.random_test), scn.random_test.label),
                                 target)
        el = recall_at_precision(pr_curve_from_scores(_scores(scn, model, scn.el_test), scn.el_test.label), target)
        out[fam] = {"random_sampled": rs, "emulated_large": el}
    return out


def enriched_training(scn: Scenario) -> PairDataset:
    n = scn.random_train.n_pos
    return build_enriched_training(scn.gt, scn.random_train, scn.el_train, n, scn.seed)


def enriched_vs_undersampled(scn: Scenario, family: str = "LinearSVM", target: float = 0.95) -> dict:
    out = {}
    for name, ds in (("undersampled", undersample(scn.random_train, scn.seed)), ("enriched", enriched_training(scn))):
        model = train_family(scn, family, ds)
        curve = pr_curve_from_scores(_scores(scn, model, scn.el_test), scn.el_test.label)
        out[name] = recall_at_precision(curve, target)
    return out


@dataclass
class PipelineResult:
    generic: float
    topmatch: float
    confidence: float
    q_threshold: Optional[float]
    linker: TrainedModel
    conf: ConfidenceModel


def _candidate_sets(scn: Scenario, probes, index=None):
    ix = index if index is not None else scn.index
    return ix.query_many(probes, scn.settings.min_sim, scn.settings.cap)


def pipeline(scn: Scenario, family: str = "LinearSVM", target: float = 0.95) -> PipelineResult:
    """Generic pairwise vs topmatch vs topmatch with the confidence stage."""
    linker = train_family(scn, family, enriched_training(scn))
    n_pos = scn.n_test_with_match()

    el = scn.el_test
    generic_curve = pr_curve_from_scores(_scores(scn, linker, el), el.label, n_positives=n_pos)

    test_sets = _candidate_sets(scn, scn.test_probes)
    table = topmatch_table(test_sets, score_candidate_sets(test_sets, linker, scn.featurizer))
    has = np.array([b is not None for b in table.best_ids])
    y = table.labels(scn.gt)
    top_curve = pr_curve_from_scores(table.s1[has], y[has], n_positives=n_pos)

    conf_sets = _candidate_sets(scn, scn.confidence_probes)
    ctab = topmatch_table(conf_sets, score_candidate_sets(conf_sets, linker, scn.featurizer))
    chas = np.array([b is not None for b in ctab.best_ids])
    conf = train_confidence(zip(ctab.p1[chas], ctab.p2[chas], ctab.labels(scn.gt)[chas]), seed=scn.seed)
    q = conf.logit(table.p1[has], table.p2[has])
    conf_curve = pr_curve_from_scores(q, y[has], n_positives=n_pos)
    return PipelineResult(recall_at_precision(generic_curve, target), recall_at_precision(top_curve, target),
                          recall_at_precision(conf_curve, target), threshold_at_precision(conf_curve, target),
                          linker, conf)


def abstention(scn: Scenario, result: PipelineResult) -> dict:
    """Matched rate of the unique-match pipeline once every true match is removed."""
    sn1, sn2, gt = scn.world
    stripped = remove_matches(sn2, gt)
    index = build_name_index(stripped)
    feat = Featurizer(sn1, stripped)
    sets = _candidate_sets(scn, scn.test_probes, index)
    table = topmatch_table(sets, score_candidate_sets(sets, result.linker, feat))
    th = result.q_threshold
    if th is None:
        return {"matched_rate": 0.0, "threshold": None, "n_probes": len(sets)}
    has = np.array([b is not None for b in table.best_ids])
    q = np.full(len(sets), -np.inf)
    if has.any():
        q[has] = result.conf.logit(table.p1[has], table.p2[has])
    matched = has & (q >= th)
    return {"matched_rate": float(matched.mean()), "threshold": th, "n_probes": len(sets)}
