from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from rapidfuzz.distance import OSA

from acidmatch.acid import estimate_availability, estimate_consistency, estimate_discriminability
from acidmatch.core import ATTRIBUTES, AttributeKind, Corpus, GroundTruth, write_profiles
from acidmatch.datagen import Availability, GenConfig, generate, perturb_name, remove_matches
from acidmatch.errors import ConfigError
from acidmatch.similarity import jaro, normalize_name

from .conftest import prof


# --- perturb_name -------------------------------------------------------------------

def test_zero_ops_is_identity():
    assert perturb_name("Martha", 0, seed=1) == "Martha"


@given(st.text("abcdefgh", min_size=1, max_size=12), st.integers(0, 2 ** 32))
def test_one_op_is_one_edit(name, seed):
    assert OSA.distance(name, perturb_name(name, 1, seed)) == 1


def test_more_ops_degrade_similarity_more():
    rng = np.random.default_rng(0)
    one = np.mean([jaro("Martha", perturb_name("Martha", 1, rng)) for _ in range(1000)])
    three = np.mean([jaro("Martha", perturb_name("Martha", 3, rng)) for _ in range(1000)])
    assert one > three


def test_perturb_is_seeded():
    assert perturb_name("Alexandra", 3, 42) == perturb_name("Alexandra", 3, 42)
    with pytest.raises(ValueError):
        perturb_name("x", -1, 0)


# --- generate --------------------------------------------------------------------------

def test_sizes_and_labels():
    cfg = GenConfig(n=300, matched_fraction=0.5, impersonation_rate=0.1, seed=3)
    sn1, sn2, gt = generate(cfg)
    assert len(sn1) == 300
    assert 120 <= len(gt) <= 180
    fakes = [p for p in sn2 if p.is_impersonator_of is not None]
    assert len(sn2) == len(gt) + cfg.n_filler + len(fakes)
    assert all(p.is_impersonator_of in sn1 for p in fakes)
    assert gt.is_special_case


def test_unmatched_world_has_empty_ground_truth():
    _, _, gt = generate(GenConfig(n=50, matched_fraction=0.0))
    assert len(gt) == 0


def test_noiseless_generation_measures_ones():
    cfg = GenConfig(n=200, n_surnames=2000, seed=1)
    sn1, sn2, gt = generate(cfg)
    for attr in ATTRIBUTES:
        assert estimate_availability(gt, sn1, sn2, attr) == 1.0
        assert estimate_consistency(gt, sn1, sn2, attr, cfg.thresholds) == 1.0


def test_byte_identical_corpora(tmp_path):
    cfg = GenConfig(n=150, matched_fraction=0.7, impersonation_rate=0.05, seed=17)
    paths = []
    for k in range(2):
        w = generate(cfg)
        for name, corpus in (("sn1", w.sn1), ("sn2", w.sn2)):
            write_profiles(corpus, tmp_path / f"{name}-{k}.jsonl")
        paths.append(w.gt)
    for name in ("sn1", "sn2"):
        assert (tmp_path / f"{name}-0.jsonl").read_bytes() == (tmp_path / f"{name}-1.jsonl").read_bytes()
    assert paths[0] == paths[1]
    other = generate(GenConfig(n=150, matched_fraction=0.7, impersonation_rate=0.05, seed=18))
    assert other.sn1 != generate(cfg).sn1


def test_manifest_records_config_digest():
    cfg = GenConfig(n=40, seed=2)
    w = generate(cfg)
    assert w.manifest["config_digest"] == cfg.digest()
    assert w.manifest["n_pairs"] == len(w.gt)


def test_zipf_surnames_produce_exact_twins():
    cfg = GenConfig(n=10_000, n_surnames=500, zipf_exponent=1.0, seed=6)
    sn1, sn2, gt = generate(cfg)
    owners = Counter(normalize_name(p.real_name) for p in sn2)
    twins = []
    for a in sn1:
        own = sum(normalize_name(sn2[b].real_name) == normalize_name(a.real_name) for b in gt.matches_of(a.profile_id))
        if owners[normalize_name(a.real_name)] > own:
            twins.append(a)
    assert twins
    probes = Corpus(twins[:100])
    d = estimate_discriminability(probes, sn2, AttributeKind.REAL_NAME, cfg.thresholds, gt)
    assert d == 0.0


@pytest.fixture(scope="module")
def calibrated():
    cfg = GenConfig(
        n=10_000,
        availability={"RealName": Availability(0.9, 0.8), "Location": Availability(0.6, 0.5, 0.3),
                      "Photo": Availability(0.7, 0.7), "Friends": Availability(0.5, 0.6)},
        consistency={"RealName": 0.77, "ScreenName": 0.9, "Location": 0.6, "Photo": 0.4, "Friends": 0.5},
        seed=21,
    )
    return cfg, generate(cfg)


def test_parameter_recovery(calibrated):
    cfg, (sn1, sn2, gt) = calibrated
    for attr in ATTRIBUTES:
        av = cfg.availability[attr.value]
        want_a = av.joint()[0]
        got_a = estimate_availability(gt, sn1, sn2, attr)
        assert got_a == pytest.approx(want_a, abs=0.02), attr
        got_c = estimate_consistency(gt, sn1, sn2, attr, cfg.thresholds)
        assert got_c == pytest.approx(cfg.consistency[attr.value], abs=0.03), attr


def test_calibration_draws_in_manifest(calibrated):
    cfg, world = calibrated
    for key, achieved in world.manifest["achieved_consistency_draws"].items():
        if achieved is not None:
            assert achieved == pytest.approx(cfg.consistency[key], abs=0.03)


def test_impersonators_copy_per_fidelity():
    cfg = GenConfig(n=2000, impersonation_rate=0.2, seed=9,
                    impersonator_fidelity={"RealName": 1.0, "ScreenName": 0.0, "Photo": 0.0})
    sn1, sn2, _ = generate(cfg)
    fakes = [p for p in sn2 if p.is_impersonator_of is not None]
    assert len(fakes) / len(sn1) == pytest.approx(0.2, abs=0.03)
    assert all(p.real_name == sn1[p.is_impersonator_of].real_name for p in fakes)
    assert np.mean([p.photo == sn1[p.is_impersonator_of].photo for p in fakes]) < 0.05


# --- config ---------------------------------------------------------------------------------

@pytest.mark.parametrize("bad", [
    {"n": 0},
    {"matched_fraction": 1.5},
    {"impersonation_rate": -0.1},
    {"consistency": {"RealName": 2.0}},
    {"availability": {"ScreenName": 0.5}},
    {"availability": {"Photo": {"sn1": 0.9, "sn2": 0.9, "correlation": -1.0}}},
    {"location_jitter_km": 100.0},
])
def test_invalid_config(bad):
    with pytest.raises(ConfigError):
        GenConfig(**bad)


def test_config_json_roundtrip(tmp_path):
    cfg = GenConfig(n=77, consistency={"Photo": 0.4}, seed=5)
    again = GenConfig.from_json(cfg.to_json())
    assert again == cfg and again.digest() == cfg.digest()
    with pytest.raises(ConfigError):
        GenConfig.from_json({"n": 5, "bogus": 1})
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        GenConfig.load(tmp_path / "bad.json")


# --- remove_matches ---------------------------------------------------------------------------

def test_remove_matches_examples():
    sn2 = Corpus([prof(f"b{i}") for i in range(1000)])
    assert remove_matches(sn2, GroundTruth()) == sn2
    gt = GroundTruth(frozenset((f"a{i}", f"b{i}") for i in range(100)))
    assert len(remove_matches(sn2, gt)) == 900


def test_remove_matches_keeps_impersonators_and_filler():
    cfg = GenConfig(n=200, impersonation_rate=0.1, seed=4)
    _, sn2, gt = generate(cfg)
    rest = remove_matches(sn2, gt)
    assert not set(rest.ids) & gt.sn2_ids
    assert len(rest) == cfg.n_filler + sum(p.is_impersonator_of is not None for p in sn2)
