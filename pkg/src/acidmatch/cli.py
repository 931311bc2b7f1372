"""Batch command line: gen | acid | sample | train | eval | match.

Every artifact-producing command writes ``<command>.manifest.json`` next
to its outputs, recording input and output digests so a run can be
checked for reproducibility. Failures print one ``error: ...`` line to
stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import rapidfuzz
import scipy
from scipy.special import expit

from . import __version__
from .acid import acid_report
from .classifiers import FAMILIES, fit, load_model, save_model, train_cascade
from .core import ThresholdConfig, load_ground_truth, load_profiles, write_ground_truth, write_profiles
from .datagen import GenConfig, SyntheticWorld, generate, remove_matches
from .errors import AcidMatchError, ConfigError
from .evaluation import (
    curve_to_csv,
    emit_pr_svg,
    imbalance_demo,
    match_breakdown,
    pr_curve_from_scores,
    recall_at_precision,
    threshold_at_precision,
)
from .experiment import EXPERIMENT_STRATEGY, ScenarioSettings, enriched_training, scenario_from_world
from .matcher import (
    ConfidenceModel,
    decisions_to_csv,
    rank_order,
    score_candidate_sets,
    topmatch_table,
    train_confidence,
)
from .sampling import PairDataset, build_name_index, undersample
from .similarity import Featurizer


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects what a command read and wrote, then emits its manifest."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.started = time.time()
        self.inputs: dict = {}
        self.outputs: list = []
        self.config_digest = None
        self.extra: dict = {}

    def read(self, path):
        if path is not None:
            self.inputs[str(path)] = sha256_file(path)
        return path

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(p)
        return p

    def finish(self) -> Path:
        manifest = {
            "command": self.command,
            "config_digest": self.config_digest,
            "seed": self.args.seed,
            "threads": self.args.threads,
            "inputs": self.inputs,
            "outputs": {p.name: sha256_file(p) for p in self.outputs},
            "versions": {"acidmatch": __version__, "python": platform.python_version(), "numpy": np.__version__,
                         "scipy": scipy.__version__, "rapidfuzz": rapidfuzz.__version__},
            "wall_clock_s": round(time.time() - self.started, 3),
        }
        manifest.update(self.extra)
        path = self.out / f"{self.command}.manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _load_corpora(run: Run, args, need_gt: bool = True):
    sn1 = load_profiles(run.read(args.sn1))
    sn2 = load_profiles(run.read(args.sn2))
    gt = load_ground_truth(run.read(args.gt), sn1, sn2) if (need_gt or args.gt) else None
    return sn1, sn2, gt


def _thresholds(run: Run, args) -> ThresholdConfig:
    return ThresholdConfig.load(run.read(args.thresholds)) if args.thresholds else ThresholdConfig()


def _read_ids(run: Run, path) -> list[str]:
    text = Path(run.read(path)).read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]


def _write_ids(path: Path, ids) -> None:
    path.write_text("".join(f"{i}\n" for i in ids), encoding="utf-8")


# --- commands --------------------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = GenConfig.load(args.config)
    if args.seed is not None:
        cfg = GenConfig.from_json({**cfg.to_json(), "seed": args.seed})
    run = Run("gen", args)
    run.read(args.config)
    run.config_digest = cfg.digest()
    args.seed = cfg.seed
    world = generate(cfg)
    write_profiles(world.sn1, run.path("sn1.jsonl"))
    write_profiles(world.sn2, run.path("sn2.jsonl"))
    write_ground_truth(world.gt, run.path("gt.csv"))
    run.extra["generator"] = world.manifest
    run.finish()
    print(f"generated {len(world.sn1)} sn1 profiles, {len(world.sn2)} sn2 profiles, {len(world.gt)} matching pairs")
    return 0


def cmd_acid(args) -> int:
    run = Run("acid", args)
    sn1, sn2, gt = _load_corpora(run, args)
    th = _thresholds(run, args)
    run.config_digest = hashlib.sha256(json.dumps(th.to_json(), sort_keys=True).encode()).hexdigest()
    report = acid_report(gt, sn1, sn2, th)
    report.to_csv(run.path("acid.csv"))
    run.finish()
    print(report.format_table())
    return 0


def cmd_sample(args) -> int:
    run = Run("sample", args)
    sn1, sn2, gt = _load_corpora(run, args)
    settings = ScenarioSettings(n_random=args.n_random, n_confidence=args.n_confidence, n_test=args.n_test,
                                min_sim=args.min_sim, cap=args.cap, train_fraction=args.train_fraction,
                                split=args.split)
    run.config_digest = hashlib.sha256(json.dumps(vars(settings), sort_keys=True).encode()).hexdigest()
    scn = scenario_from_world(SyntheticWorld(sn1, sn2, gt, {}), settings, args.seed, build_name_index(sn2, args.threads))
    scn.random_train.to_csv(run.path("random_train.csv"))
    scn.random_test.to_csv(run.path("random_test.csv"))
    undersample(scn.random_train, args.seed).to_csv(run.path("undersampled_train.csv"))
    scn.el_train.to_csv(run.path("el_train.csv"))
    scn.el_test.to_csv(run.path("el_test.csv"))
    enriched_training(scn).to_csv(run.path("enriched_train.csv"))
    _write_ids(run.path("confidence_probes.txt"), [p.profile_id for p in scn.confidence_probes])
    _write_ids(run.path("test_probes.txt"), [p.profile_id for p in scn.test_probes])
    run.extra["settings"] = vars(settings)
    run.extra["containment_rate"] = scn.el_test.meta.get("containment_rate")
    run.finish()
    rate = scn.el_test.meta.get("containment_rate")
    print(f"random-sampled: {len(scn.random_train)} train / {len(scn.random_test)} test pairs; "
          f"emulated-large: {len(scn.el_test)} test pairs; "
          f"containment rate {'n/a' if rate is None else f'{rate:.4f}'}")
    return 0


def _train_config(args) -> dict:
    if not args.config:
        return {}
    try:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{args.config}: hyperparameters must be a JSON object")
    return data


def cmd_train(args) -> int:
    run = Run("train", args)
    sn1, sn2, gt = _load_corpora(run, args, need_gt=args.confidence)
    feat = Featurizer(sn1, sn2)
    config = _train_config(args)
    if args.config:
        run.read(args.config)
    run.config_digest = hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()
    if args.confidence:
        return _train_confidence(run, args, sn1, sn2, gt, feat)
    ds = PairDataset.from_csv(run.read(args.data))
    if args.cascade_hard:
        hard = PairDataset.from_csv(run.read(args.cascade_hard))
        model = train_cascade(ds, hard, feat, config, args.seed)
    else:
        strategy = args.strategy or EXPERIMENT_STRATEGY.get(args.family)
        X = feat.pairs(ds.id1, ds.id2)
        model = fit(args.family, X, ds.label, config, args.seed, strategy,
                    manifest={"role": "linker", "data": Path(args.data).name, "data_digest": ds.digest()})
    save_model(model, run.path(f"{args.name}.model"))
    run.finish()
    print(f"trained {getattr(model, 'family', 'Cascade')} on {len(ds)} pairs -> {args.name}.model")
    return 0


def _train_confidence(run: Run, args, sn1, sn2, gt, feat) -> int:
    linker = load_model(run.read(args.linker))
    probes = [sn1[i] for i in _read_ids(run, args.probes)]
    index = build_name_index(sn2, args.threads)
    sets = index.query_many(probes, args.min_sim, args.cap)
    table = topmatch_table(sets, score_candidate_sets(sets, linker, feat))
    has = np.array([b is not None for b in table.best_ids], dtype=bool)
    y = table.labels(gt)
    conf = train_confidence(zip(table.p1[has], table.p2[has], y[has]), seed=args.seed)
    logit = conf.logit(table.p1[has], table.p2[has])
    n_pos = sum(1 for p in probes if gt.matches_of(p.profile_id))
    curve = pr_curve_from_scores(logit, y[has], n_positives=max(n_pos, int(y[has].sum())))
    t = threshold_at_precision(curve, args.target_precision)
    # a decision is Matched iff q > th_q, and the curve declares at logit >= t
    th_q = 1.0 if t is None else float(np.nextafter(expit(t), 0.0))
    conf.model.manifest.update({"role": "confidence", "q_threshold": th_q, "target_precision": args.target_precision,
                                "min_sim": args.min_sim, "cap": args.cap})
    save_model(conf.model, run.path(f"{args.name}.model"))
    run.extra["q_threshold"] = th_q
    run.finish()
    print(f"trained confidence model on {int(has.sum())} topmatch decisions; q threshold {th_q:.6f} "
          f"at precision {args.target_precision}")
    return 0


def cmd_eval(args) -> int:
    if args.demo_imbalance is not None:
        tpr, fpr, n_pos, n_neg = args.demo_imbalance
        tp, fp, precision = imbalance_demo(tpr, fpr, int(n_pos), int(n_neg))
        print(f"true matches {tp:.0f}, false matches {fp:.0f}, precision {100 * precision:.2f}%")
        if args.model is None:
            return 0
    for flag in ("sn1", "sn2", "model", "data"):
        if getattr(args, flag) is None:
            raise AcidMatchError(f"eval needs --{flag} unless only --demo-imbalance is given")
    run = Run("eval", args)
    sn1, sn2, _ = _load_corpora(run, args, need_gt=False)
    th = _thresholds(run, args)
    model = load_model(run.read(args.model))
    ds = PairDataset.from_csv(run.read(args.data))
    scores = model.predict_matrix(Featurizer(sn1, sn2).pairs(ds.id1, ds.id2))
    curve = pr_curve_from_scores(scores, ds.label, args.n_thresholds)
    curve_to_csv(curve, run.path("pr.csv"))
    svg = run.path("pr.svg")
    emit_pr_svg({"curve": curve}, svg)
    r = recall_at_precision(curve, args.target_precision)
    th_p = args.th_p
    if th_p is None:
        th_p = threshold_at_precision(curve, args.target_precision)
        th_p = 0.5 if th_p is None else th_p
    match_breakdown(model, ds, th_p, sn1, sn2, th, scores=scores).to_csv(run.path("breakdown.csv"))
    run.extra["recall_at_precision"] = {"target": args.target_precision, "recall": r, "th_p": th_p}
    run.finish()
    print(f"recall at precision {args.target_precision}: {r:.4f} (breakdown at p >= {th_p:.6g})")
    return 0


def cmd_match(args) -> int:
    run = Run("match", args)
    sn1, sn2, gt = _load_corpora(run, args, need_gt=args.strip_matches)
    if args.strip_matches:
        sn2 = remove_matches(sn2, gt)
    linker = load_model(run.read(args.model))
    probes = [sn1[i] for i in _read_ids(run, args.probes)] if args.probes else list(sn1)
    feat = Featurizer(sn1, sn2)
    sets = build_name_index(sn2, args.threads).query_many(probes, args.min_sim, args.cap)
    logits = score_candidate_sets(sets, linker, feat)
    if args.mode == "generic":
        th_p = 0.5 if args.threshold is None else args.threshold
        rows, start = ["probe_id,matched_id,p\n"], 0
        n_matched = 0
        for cs in sets:
            s = logits[start:start + len(cs)]
            start += len(cs)
            p = expit(s)
            hits = [i for i in rank_order(s, cs.scores, cs.ids) if p[i] > th_p]
            n_matched += bool(hits)
            rows.extend(f"{cs.probe_id},{cs.ids[i]},{float(p[i])!r}\n" for i in hits)
        run.path("matches.csv").write_text("".join(rows), encoding="utf-8")
        run.extra["summary"] = {"probes": len(sets), "with_match": n_matched, "th_p": th_p}
        run.finish()
        print(f"{n_matched} of {len(sets)} probes have at least one match above p = {th_p}")
        return 0
    conf_model = load_model(run.read(args.conf))
    th_q = args.threshold if args.threshold is not None else conf_model.manifest.get("q_threshold")
    if th_q is None:
        raise AcidMatchError("no q threshold: pass --threshold or use a confidence model trained by this tool")
    table = topmatch_table(sets, logits)
    decisions = table.decisions(ConfidenceModel(conf_model), float(th_q))
    decisions_to_csv(decisions, run.path("decisions.csv"))
    n_matched = sum(d.matched_id is not None for d in decisions)
    run.extra["summary"] = {"probes": len(decisions), "matched": n_matched, "abstain": len(decisions) - n_matched,
                            "th_q": float(th_q)}
    run.finish()
    print(f"Matched {n_matched}, Abstain {len(decisions) - n_matched} "
          f"({100 * (len(decisions) - n_matched) / max(len(decisions), 1):.1f}% abstain) at q > {float(th_q):.6g}")
    return 0


# --- argument parsing ------------------------------------------------------------

def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--seed", type=int, default=None if p.prog.endswith(" gen") else 0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=out_required, help="output directory")


def _corpora(p: argparse.ArgumentParser, gt_required: bool = True, required: bool = True) -> None:
    p.add_argument("--sn1", required=required)
    p.add_argument("--sn2", required=required)
    p.add_argument("--gt", required=gt_required)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acidmatch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"acidmatch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic two-network corpus")
    p.add_argument("--config", required=True, help="GenConfig JSON")
    _common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("acid", help="estimate availability, consistency, nI and discriminability")
    _corpora(p)
    p.add_argument("--thresholds", help="ThresholdConfig JSON")
    _common(p)
    p.set_defaults(func=cmd_acid)

    p = sub.add_parser("sample", help="build Random-Sampled, Emulated-Large and training sets")
    _corpora(p)
    p.add_argument("--n-random", type=int, default=850)
    p.add_argument("--n-confidence", type=int, default=500)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--min-sim", type=float, default=0.5)
    p.add_argument("--cap", type=int, default=1000)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--split", choices=("profiles", "pairs"), default="profiles")
    _common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", help="train a linker, an NB cascade or a confidence model")
    _corpora(p, gt_required=False)
    p.add_argument("--data", help="training PairDataset CSV")
    p.add_argument("--family", choices=FAMILIES, default="LinearSVM")
    p.add_argument("--strategy", help="missing-value strategy (default depends on the family)")
    p.add_argument("--config", help="hyperparameter JSON")
    p.add_argument("--cascade-hard", help="hard-negative PairDataset CSV; trains the two-stage NB cascade")
    p.add_argument("--confidence", action="store_true", help="train the confidence model for --mode unique")
    p.add_argument("--linker", help="linker model (with --confidence)")
    p.add_argument("--probes", help="probe id list (with --confidence)")
    p.add_argument("--target-precision", type=float, default=0.95)
    p.add_argument("--min-sim", type=float, default=0.5)
    p.add_argument("--cap", type=int, default=1000)
    p.add_argument("--name", default=None, help="model file stem")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="precision/recall curve, SVG plot and match breakdown")
    _corpora(p, gt_required=False, required=False)
    p.add_argument("--model")
    p.add_argument("--data", help="labeled PairDataset CSV")
    p.add_argument("--thresholds", help="ThresholdConfig JSON for the breakdown")
    p.add_argument("--target-precision", type=float, default=0.95)
    p.add_argument("--th-p", type=float, default=None, help="breakdown threshold on p")
    p.add_argument("--n-thresholds", type=int, default=101)
    p.add_argument("--demo-imbalance", nargs=4, type=float, metavar=("TPR", "FPR", "N_POS", "N_NEG"))
    _common(p, out_required=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("match", help="generic pairwise matching or unique matching with abstention")
    _corpora(p, gt_required=False)
    p.add_argument("--model", required=True, help="linker model")
    p.add_argument("--conf", help="confidence model (--mode unique)")
    p.add_argument("--mode", choices=("generic", "unique"), default="generic")
    p.add_argument("--threshold", type=float, default=None, help="th_p (generic) or th_q (unique)")
    p.add_argument("--probes", help="probe id list; defaults to every sn1 profile")
    p.add_argument("--strip-matches", action="store_true", help="drop every matching sn2 profile first (needs --gt)")
    p.add_argument("--min-sim", type=float, default=0.5)
    p.add_argument("--cap", type=int, default=1000)
    _common(p)
    p.set_defaults(func=cmd_match)
    return parser


def _validate(args) -> None:
    if args.threads < 1:
        raise AcidMatchError("--threads must be >= 1")
    if args.command == "train":
        if args.confidence:
            if not (args.linker and args.probes and args.gt):
                raise AcidMatchError("train --confidence needs --linker, --probes and --gt")
            args.name = args.name or "confidence"
        else:
            if not args.data:
                raise AcidMatchError("train needs --data")
            args.name = args.name or ("cascade" if args.cascade_hard else "linker")
    if args.command == "match" and args.mode == "unique" and args.conf is None:
        raise AcidMatchError("--mode unique needs --conf")
    if args.command == "match" and args.strip_matches and not args.gt:
        raise AcidMatchError("--strip-matches needs --gt")
    if args.command == "eval" and args.out is None and args.demo_imbalance is None:
        raise AcidMatchError("eval needs --out")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _validate(args)
        return args.func(args)
    except (AcidMatchError, OSError, ValueError) as exc:
        message = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
