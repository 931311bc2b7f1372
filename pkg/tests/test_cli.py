import csv
import json
import subprocess
import sys

import pytest

from acidmatch.cli import main
from acidmatch.experiment import scenario_config


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def smoke(capsys, root, seed=0):
    """Whole pipeline on a 2000-profile corpus: gen, sample, train, confidence, unique match."""
    cfg = root / "cfg.json"
    cfg.write_text(json.dumps(scenario_config(n=2000, seed=seed, matched_fraction=0.5).to_json()))
    g, s, m, c, u = (root / d for d in "gsmcu")
    corpora = ["--sn1", g / "sn1.jsonl", "--sn2", g / "sn2.jsonl", "--gt", g / "gt.csv"]
    block = ["--min-sim", 0.8, "--cap", 300]
    steps = [
        ["gen", "--config", cfg, "--out", g],
        ["sample", *corpora, "--n-random", 300, "--n-confidence", 500, "--n-test", 500, *block, "--out", s],
        ["train", *corpora, "--data", s / "enriched_train.csv", "--family", "LinearSVM", "--out", m],
        ["train", "--confidence", *corpora, "--linker", m / "linker.model", "--probes", s / "confidence_probes.txt",
         *block, "--out", c],
        ["match", "--mode", "unique", "--strip-matches", *corpora, "--model", m / "linker.model",
         "--conf", c / "confidence.model", "--probes", s / "test_probes.txt", *block, "--out", u],
    ]
    for argv in steps:
        code, _, err = run(capsys, *argv)
        assert code == 0, err
    return root


def output_digests(root):
    digests = {}
    for manifest in sorted(root.glob("*/*.manifest.json")):
        for name, digest in json.loads(manifest.read_text())["outputs"].items():
            digests[f"{manifest.parent.name}/{name}"] = digest
    return digests


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    capsys = _Quiet()
    return smoke(capsys, tmp_path_factory.mktemp("smoke"))


class _Quiet:
    def readouterr(self):
        return "", ""


@pytest.fixture
def corpus(tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps({"n": 60, "matched_fraction": 0.8, "seed": 1}))
    assert run(capsys, "gen", "--config", tmp_path / "cfg.json", "--out", tmp_path / "g")[0] == 0
    g = tmp_path / "g"
    return ["--sn1", g / "sn1.jsonl", "--sn2", g / "sn2.jsonl", "--gt", g / "gt.csv"]


def test_demo_imbalance(capsys):
    code, out, _ = run(capsys, "eval", "--demo-imbalance", 0.9, 0.01, 1000, 999000)
    assert code == 0
    assert out.strip() == "true matches 900, false matches 9990, precision 8.26%"


def test_gen_writes_manifest(tmp_path, capsys, corpus):
    manifest = json.loads((tmp_path / "g" / "gen.manifest.json").read_text())
    assert set(manifest["outputs"]) == {"sn1.jsonl", "sn2.jsonl", "gt.csv"}
    assert manifest["seed"] == 1 and manifest["config_digest"]


def test_gen_seed_flag_overrides_config(tmp_path, capsys, corpus):
    cfg = tmp_path / "cfg.json"
    run(capsys, "gen", "--config", cfg, "--out", tmp_path / "again")
    run(capsys, "gen", "--config", cfg, "--seed", 2, "--out", tmp_path / "other")
    first = (tmp_path / "g" / "sn1.jsonl").read_bytes()
    assert (tmp_path / "again" / "sn1.jsonl").read_bytes() == first
    assert (tmp_path / "other" / "sn1.jsonl").read_bytes() != first


def test_acid_table_and_csv(tmp_path, capsys, corpus):
    code, out, _ = run(capsys, "acid", *corpus, "--out", tmp_path / "a")
    assert code == 0
    assert "RealName" in out
    with open(tmp_path / "a" / "acid.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["attribute"] for r in rows] == ["RealName", "ScreenName", "Location", "Photo", "Friends"]
    assert set(rows[0]) == {"attribute", "A", "C", "nI", "D_tilde", "th", "p_I"}


def test_eval_writes_curve_and_breakdown(tmp_path, capsys, corpus):
    s, m, e = tmp_path / "s", tmp_path / "m", tmp_path / "e"
    assert run(capsys, "sample", *corpus, "--n-random", 20, "--n-confidence", 5, "--n-test", 5, "--out", s)[0] == 0
    assert run(capsys, "train", *corpus, "--data", s / "random_train.csv", "--family", "LogisticRegression",
               "--out", m)[0] == 0
    code, out, err = run(capsys, "eval", *corpus[:4], "--model", m / "linker.model", "--data", s / "random_test.csv",
                         "--out", e)
    assert code == 0, err
    assert out.startswith("recall at precision 0.95:")
    for name in ("pr.csv", "pr.svg", "breakdown.csv", "eval.manifest.json"):
        assert (e / name).exists()


def test_missing_file_is_one_error_line(tmp_path, capsys):
    code, out, err = run(capsys, "acid", "--sn1", tmp_path / "nope.jsonl", "--sn2", tmp_path / "x", "--gt",
                         tmp_path / "y", "--out", tmp_path / "a")
    assert code == 1 and out == ""
    assert err.startswith("error: ") and err.count("\n") == 1


def test_bad_config_json(tmp_path, capsys):
    (tmp_path / "cfg.json").write_text("{oops")
    code, _, err = run(capsys, "gen", "--config", tmp_path / "cfg.json", "--out", tmp_path / "g")
    assert code == 1
    assert err.startswith("error: ConfigError: ")


def test_invalid_config_value(tmp_path, capsys):
    (tmp_path / "cfg.json").write_text(json.dumps({"n": -3}))
    code, _, err = run(capsys, "gen", "--config", tmp_path / "cfg.json", "--out", tmp_path / "g")
    assert code == 1 and "ConfigError" in err


def test_argument_dependencies(tmp_path, capsys, corpus):
    code, _, err = run(capsys, "train", *corpus, "--out", tmp_path / "m")
    assert code == 1 and "--data" in err
    code, _, err = run(capsys, "train", "--confidence", *corpus, "--out", tmp_path / "m")
    assert code == 1 and "--linker" in err
    code, _, err = run(capsys, "match", *corpus[:4], "--model", "x", "--strip-matches", "--out", tmp_path / "u")
    assert code == 1 and "--gt" in err


def test_unique_mode_needs_confidence_model(tmp_path, capsys, pipeline):
    g = pipeline / "g"
    code, _, err = run(capsys, "match", "--mode", "unique", "--sn1", g / "sn1.jsonl", "--sn2", g / "sn2.jsonl",
                       "--model", pipeline / "m" / "linker.model", "--out", tmp_path / "u")
    assert code == 1 and "--conf" in err


def test_smoke_pipeline_mostly_abstains(pipeline):
    summary = json.loads((pipeline / "u" / "match.manifest.json").read_text())["summary"]
    assert summary["probes"] == 500
    assert summary["abstain"] / summary["probes"] >= 0.95


def test_generic_mode_lists_matches(tmp_path, capsys, pipeline):
    g = pipeline / "g"
    code, out, _ = run(capsys, "match", "--sn1", g / "sn1.jsonl", "--sn2", g / "sn2.jsonl",
                       "--model", pipeline / "m" / "linker.model", "--probes", pipeline / "s" / "test_probes.txt",
                       "--threshold", 0.9, "--out", tmp_path / "gm")
    assert code == 0 and "probes have at least one match above p = 0.9" in out
    lines = (tmp_path / "gm" / "matches.csv").read_text().splitlines()
    assert lines[0] == "probe_id,matched_id,p"
    assert all(float(line.split(",")[2]) > 0.9 for line in lines[1:])


def test_pipeline_is_deterministic(tmp_path, capsys, pipeline):
    again = smoke(capsys, tmp_path)
    assert output_digests(again) == output_digests(pipeline)
    assert len(output_digests(pipeline)) == 14


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "acidmatch.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("acidmatch ")
