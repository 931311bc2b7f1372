import json
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from acidmatch.core import Corpus, Friend, GroundTruth, Location, Profile
from acidmatch.datagen import GenConfig, generate

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ORACLES = json.loads((Path(__file__).parent / "oracles" / "values.json").read_text())


@pytest.fixture(scope="session")
def oracle():
    return ORACLES


def prof(pid, net="sn2", screen=None, real=None, loc=None, photo=None, friends=None, imp=None):
    """Terse Profile builder; ``loc`` is (lat, lon) and ``friends`` a list of screen names."""
    location = None if loc is None else Location(f"{loc[0]},{loc[1]}", *loc)
    fl = None if friends is None else tuple(f if isinstance(f, Friend) else Friend(f) for f in friends)
    return Profile(pid, net, screen or pid, real, location, photo, fl, imp)


def pair_world(specs):
    """Build (sn1, sn2, gt) from [(sn1 kwargs, sn2 kwargs or None)] with ids a<i>/b<i>."""
    sn1, sn2, pairs = [], [], []
    for i, (left, right) in enumerate(specs):
        sn1.append(prof(f"a{i}", "sn1", **left))
        if right is not None:
            sn2.append(prof(f"b{i}", "sn2", **right))
            pairs.append((f"a{i}", f"b{i}"))
    return Corpus(sn1), Corpus(sn2), GroundTruth(frozenset(pairs))


@pytest.fixture(scope="session")
def small_world():
    cfg = GenConfig(n=400, matched_fraction=0.8, impersonation_rate=0.05,
                    consistency={"RealName": 0.8, "Location": 0.7, "Photo": 0.6, "Friends": 0.5},
                    availability={"RealName": 0.9, "Location": 0.6, "Photo": 0.7, "Friends": 0.5}, seed=5)
    return generate(cfg)


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
