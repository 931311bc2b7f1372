import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from acidmatch.core import (
    ATTRIBUTES,
    AttributeKind,
    Corpus,
    FeatureVector,
    Friend,
    GroundTruth,
    Location,
    Profile,
    ThresholdConfig,
    load_gazetteer,
    load_ground_truth,
    load_profiles,
    write_ground_truth,
    write_profiles,
)
from acidmatch.errors import (
    ConfigError,
    CoordinateError,
    DuplicateIdError,
    DuplicatePairError,
    ParseError,
    UnresolvedIdError,
)

from .conftest import prof


def _write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


def test_attribute_kind_has_five_members_in_slot_order():
    assert len(AttributeKind) == 5
    assert [a.slot for a in ATTRIBUTES] == [0, 1, 2, 3, 4]
    assert AttributeKind.parse("real_name") is AttributeKind.REAL_NAME


def test_load_two_records(tmp_path):
    path = _write_jsonl(tmp_path / "c.jsonl", [
        {"profile_id": "x", "network_id": "sn1", "screen_name": "xx"},
        {"profile_id": "y", "network_id": "sn1", "screen_name": "yy", "real_name": "Y Y",
         "location": {"label": "somewhere", "lat": 1.0, "lon": 2.0}, "photo": "00000000000000ff",
         "friends": [{"screen_name": "f", "real_name": None}]},
    ])
    corpus = load_profiles(path)
    assert len(corpus) == 2
    assert corpus["y"].photo == 255
    assert corpus["y"].friends == (Friend("f"),)
    assert corpus["x"].friends is None


def test_duplicate_id_rejected(tmp_path):
    rec = {"profile_id": "x", "network_id": "sn1", "screen_name": "xx"}
    with pytest.raises(DuplicateIdError):
        load_profiles(_write_jsonl(tmp_path / "c.jsonl", [rec, rec]))


def test_latitude_out_of_range(tmp_path):
    rec = {"profile_id": "x", "network_id": "sn1", "screen_name": "xx",
           "location": {"label": "nowhere", "lat": 91, "lon": 0}}
    with pytest.raises(CoordinateError):
        load_profiles(_write_jsonl(tmp_path / "c.jsonl", [rec]))


def test_parse_error_carries_line_number(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"profile_id": "x", "network_id": "sn1", "screen_name": "a"}\n{not json\n')
    with pytest.raises(ParseError, match=":2:"):
        load_profiles(path)


def test_missing_screen_name_is_a_parse_error(tmp_path):
    with pytest.raises(ParseError):
        load_profiles(_write_jsonl(tmp_path / "c.jsonl", [{"profile_id": "x", "network_id": "sn1"}]))


@pytest.mark.parametrize("field,value", [
    ("location", [{"label": "a", "lat": 1, "lon": 2}, {"label": "b", "lat": 3, "lon": 4}]),
    ("photo", ["00ff00ff00ff00ff", "ffffffff00000000"]),
])
def test_multi_valued_attribute_rejected(tmp_path, field, value):
    rec = {"profile_id": "x", "network_id": "sn1", "screen_name": "a", field: value}
    with pytest.raises(ParseError, match="at most one"):
        load_profiles(_write_jsonl(tmp_path / "c.jsonl", [rec]))


def test_gazetteer_resolves_labels(tmp_path):
    gaz = load_gazetteer()
    assert gaz
    label = next(iter(gaz))
    rec = {"profile_id": "x", "network_id": "sn1", "screen_name": "a", "location": label.upper()}
    corpus = load_profiles(_write_jsonl(tmp_path / "c.jsonl", [rec]), gazetteer=True)
    assert (corpus["x"].location.lat, corpus["x"].location.lon) == gaz[label]


def test_unresolvable_label_without_gazetteer(tmp_path):
    rec = {"profile_id": "x", "network_id": "sn1", "screen_name": "a", "location": "Atlantis"}
    with pytest.raises(ParseError):
        load_profiles(_write_jsonl(tmp_path / "c.jsonl", [rec]))


def test_photo_path_is_hashed_at_load(tmp_path):
    from PIL import Image

    from acidmatch.similarity import phash64

    Image.new("RGB", (40, 30), (200, 10, 10)).save(tmp_path / "p.png")
    rec = {"profile_id": "x", "network_id": "sn1", "screen_name": "a", "photo_path": "p.png"}
    corpus = load_profiles(_write_jsonl(tmp_path / "c.jsonl", [rec]))
    assert corpus["x"].photo == phash64((tmp_path / "p.png").read_bytes())


def test_ground_truth_roundtrip_and_size(tmp_path):
    n = 4182
    sn1 = Corpus(prof(f"a{i}", "sn1") for i in range(n))
    sn2 = Corpus(prof(f"b{i}") for i in range(n))
    gt = GroundTruth(frozenset((f"a{i}", f"b{i}") for i in range(n)))
    write_ground_truth(gt, tmp_path / "gt.csv")
    loaded = load_ground_truth(tmp_path / "gt.csv", sn1, sn2)
    assert len(loaded) == 4182
    assert loaded == gt
    assert loaded.is_special_case


def test_empty_ground_truth_file(tmp_path):
    (tmp_path / "gt.csv").write_text("")
    assert len(load_ground_truth(tmp_path / "gt.csv", Corpus([]), Corpus([]))) == 0


def test_unknown_id_in_ground_truth(tmp_path):
    (tmp_path / "gt.csv").write_text("id1,id2\na0,nope\n")
    with pytest.raises(UnresolvedIdError):
        load_ground_truth(tmp_path / "gt.csv", Corpus([prof("a0", "sn1")]), Corpus([prof("b0")]))


def test_duplicate_pair_in_ground_truth(tmp_path):
    (tmp_path / "gt.csv").write_text("id1,id2\na0,b0\na0,b0\n")
    with pytest.raises(DuplicatePairError):
        load_ground_truth(tmp_path / "gt.csv", Corpus([prof("a0", "sn1")]), Corpus([prof("b0")]))


def test_special_case_detection():
    gt = GroundTruth(frozenset({("a", "b"), ("a", "c")}))
    assert not gt.is_special_case
    assert gt.matches_of("a") == ("b", "c")


def test_threshold_defaults_and_validation():
    th = ThresholdConfig()
    assert (th.real_name, th.screen_name, th.location_km, th.photo, th.friends) == (0.66, 0.82, 70.0, 0.60, 2)
    with pytest.raises(ConfigError):
        ThresholdConfig(real_name=1.5)
    with pytest.raises(ConfigError):
        ThresholdConfig(location_km=float("inf"))
    assert ThresholdConfig.from_json(th.to_json()) == th


def test_threshold_pass_directions():
    th = ThresholdConfig()
    assert th.passes(AttributeKind.REAL_NAME, 0.67) and not th.passes(AttributeKind.REAL_NAME, 0.66)
    assert th.passes(AttributeKind.LOCATION, 69.9) and not th.passes(AttributeKind.LOCATION, 70.0)
    assert th.passes(AttributeKind.FRIENDS, 2) and not th.passes(AttributeKind.FRIENDS, 1)
    assert not th.passes(AttributeKind.PHOTO, np.nan)


def test_feature_vector_rejects_nonfinite():
    with pytest.raises(ValueError):
        FeatureVector(float("nan"), 1.0, None, None, None)
    fv = FeatureVector(0.5, 1.0, None, None, 3.0)
    assert FeatureVector.from_array(fv.as_array()) == fv


def test_corpus_is_immutable():
    corpus = Corpus([prof("a")])
    with pytest.raises(AttributeError):
        corpus.profiles[0].screen_name = "changed"
    with pytest.raises(TypeError):
        corpus.profiles[0] = prof("b")


names = st.text(st.characters(blacklist_categories=("Cs", "Cc")), min_size=1, max_size=12).filter(str.strip)
profiles = st.builds(
    Profile,
    profile_id=st.uuids().map(str),
    network_id=st.sampled_from(["sn1", "sn2"]),
    screen_name=names,
    real_name=st.none() | names,
    location=st.none() | st.builds(Location, names, st.floats(-90, 90), st.floats(-180, 180)),
    photo=st.none() | st.integers(0, 2 ** 64 - 1),
    friends=st.none() | st.lists(st.builds(Friend, names, st.none() | names), max_size=4).map(tuple),
)


@given(st.lists(profiles, max_size=6, unique_by=lambda p: p.profile_id))
def test_corpus_roundtrip(tmp_path_factory, items):
    path = tmp_path_factory.mktemp("rt") / "c.jsonl"
    corpus = Corpus(items)
    write_profiles(corpus, path)
    assert load_profiles(path) == corpus
