"""Command-line entry point wiring configs to the pipeline.

Batch-oriented: each subcommand reads files, runs one stage, writes its
artifacts plus a manifest (resolved config, seeds, SHA-256 of every input
and output) sufficient to reproduce the run bit-for-bit.

Exit codes: 0 success, 2 usage/config/file errors, 3 numeric failure.
A failing gradient check exits 1 (the run itself succeeded; the check
found a discrepancy).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .embedstore import load_embeddings, save_embeddings
from .episodic import ClassSplit, derive_rng, sample_episode, split_classes
from .errors import FewgenError, NumericError
from .harness import (
    PRESETS,
    EvalConfig,
    SynthSpec,
    evaluate,
    make_synthetic,
    write_report,
)
from .protocore import ProjectionHead, load_head, save_head
from .trainer import TrainConfig, gradient_check, train, write_trace

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _sha256(path) -> str:
    digest = hashlib.sha256()
    digest.update(Path(path).read_bytes())
    return digest.hexdigest()


def write_manifest(command: str, config: dict, inputs, outputs) -> None:
    """Reproducibility record written next to the primary output."""
    primary = outputs[0]
    doc = {
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs if p is not None},
        "outputs": {str(p): _sha256(p) for p in outputs},
    }
    path = Path(str(primary) + ".manifest.json")
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_split(split: ClassSplit, path) -> None:
    doc = {
        "seen": sorted(split.seen),
        "valid": sorted(split.valid),
        "unseen": sorted(split.unseen),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_split(path) -> ClassSplit:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    missing = {"seen", "valid", "unseen"} - doc.keys()
    if missing:
        raise ValueError(f"split file {path} is missing keys: {sorted(missing)}")
    return ClassSplit(
        seen=frozenset(doc["seen"]),
        valid=frozenset(doc["valid"]),
        unseen=frozenset(doc["unseen"]),
    )


def _strategy_arg(value: str | None) -> str | None:
    if value is None or value == "none":
        return None
    return value


def _flag_given(argv: list[str], dest: str) -> bool:
    flag = "--" + dest.replace("_", "-")
    return any(tok == flag or tok.startswith(flag + "=") for tok in argv)


def _apply_config_file(args: argparse.Namespace, argv: list[str]) -> None:
    """Overlay a flat JSON config file; explicit flags win over file values."""
    if getattr(args, "config", None) is None:
        return
    data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"config file {args.config} must hold a JSON object")
    for key, value in data.items():
        if key in ("config", "command", "func") or not hasattr(args, key):
            raise ValueError(f"config file {args.config} has unknown key {key!r}")
        if not _flag_given(argv, key):
            setattr(args, key, value)


def _apply_preset(args: argparse.Namespace, argv: list[str]) -> None:
    if getattr(args, "preset", None) is None:
        return
    if args.preset not in PRESETS:
        raise ValueError(f"unknown preset {args.preset!r}, choose from {sorted(PRESETS)}")
    for key, value in PRESETS[args.preset].items():
        dest = {"n_query": "q", "r_neighbors": "r"}[key]
        if not _flag_given(argv, dest):
            setattr(args, dest, value)


def cmd_split(args: argparse.Namespace) -> int:
    store = load_embeddings(args.embeddings)
    split = split_classes(store, (args.seen, args.valid, args.unseen), args.seed)
    write_split(split, args.out)
    config = {
        "embeddings": str(args.embeddings),
        "seen": args.seen, "valid": args.valid, "unseen": args.unseen,
        "seed": args.seed, "out": str(args.out),
    }
    write_manifest("split", config, [args.embeddings], [args.out])
    print(f"wrote {args.out}: {args.seen} seen / {args.valid} valid / {args.unseen} unseen")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    store = load_embeddings(args.embeddings)
    if args.split is not None:
        split = read_split(args.split)
    else:
        split = ClassSplit(seen=frozenset(store.labels), valid=frozenset(), unseen=frozenset())
    config = TrainConfig(
        n_way=args.n, k_shot=args.k, n_query=args.q, r_neighbors=args.r,
        n_gen=args.gen, lam=args.lam, strategy=_strategy_arg(args.strategy),
        learning_rate=args.lr, weight_decay=args.weight_decay,
        episodes=args.episodes, seed=args.seed, d_out=args.d_out,
        optimizer=args.optimizer, allocation=args.allocation,
    )
    head, trace = train(store, split, config)
    save_head(head, args.out)
    write_trace(trace, args.trace)
    manifest_config = {**asdict(config), "embeddings": str(args.embeddings),
                       "split": None if args.split is None else str(args.split),
                       "out": str(args.out), "trace": str(args.trace)}
    write_manifest("train", manifest_config, [args.embeddings, args.split], [args.out, args.trace])
    print(f"trained {config.episodes} episodes, final loss {trace[-1].l_total:.6f}, wrote {args.out}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    store = load_embeddings(args.embeddings)
    if args.split is not None:
        split = read_split(args.split)
    else:
        split = ClassSplit(seen=frozenset(), valid=frozenset(), unseen=frozenset(store.labels))
    head = load_head(args.head) if args.head is not None else ProjectionHead.identity(store.dim)
    config = EvalConfig(
        n_way=args.n, k_shot=args.k, n_query=args.q, r_neighbors=args.r,
        n_gen=args.gen, strategy=_strategy_arg(args.strategy),
        episodes=args.episodes, runs=args.runs, seed=args.seed,
        allocation=args.allocation, l2_normalize=args.l2_normalize,
    )
    report = evaluate(store, split, head, config, n_jobs=args.jobs)
    write_report(report, args.report)
    manifest_config = {**asdict(config), "embeddings": str(args.embeddings),
                       "split": None if args.split is None else str(args.split),
                       "head": None if args.head is None else str(args.head),
                       "jobs": args.jobs, "report": str(args.report)}
    write_manifest("eval", manifest_config, [args.embeddings, args.split, args.head], [args.report])
    print(f"mean accuracy {report.mean:.4f} (std {report.std:.4f}, ci95 {report.ci95:.4f}) "
          f"over {config.runs} run(s) x {config.episodes} episodes")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SynthSpec(
        n_classes=args.classes, dim=args.dim, per_class_count=args.per_class,
        class_mean_scale=args.mean_scale, cov_kind=args.cov,
        cov_scale=args.cov_scale, seed=args.seed,
    )
    store, truth = make_synthetic(spec)
    save_embeddings(store, args.out)
    outputs = [args.out]
    if args.truth is not None:
        doc = {
            label: {"mean": mean.tolist(), "cov": cov.tolist()}
            for label, (mean, cov) in sorted(truth.items())
        }
        Path(args.truth).write_text(json.dumps(doc) + "\n", encoding="utf-8")
        outputs.append(args.truth)
    manifest_config = {**asdict(spec), "out": str(args.out),
                       "truth": None if args.truth is None else str(args.truth)}
    write_manifest("synth", manifest_config, [], outputs)
    print(f"wrote {args.out}: {len(store)} records, dim {store.dim}")
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    spec = SynthSpec(
        n_classes=max(args.n + 1, 6), dim=args.dim,
        per_class_count=args.k + args.q + 2, class_mean_scale=2.0,
        cov_kind="isotropic", cov_scale=0.6, seed=args.seed,
    )
    store, _ = make_synthetic(spec)
    episode = sample_episode(
        store, frozenset(store.labels), args.n, args.k, args.q,
        derive_rng(args.seed, "gradcheck-episode"),
    )
    head = ProjectionHead.orthonormal(args.dim, args.dim, derive_rng(args.seed, "gradcheck-head"))
    head.bias = 0.01 * derive_rng(args.seed, "gradcheck-bias").standard_normal(args.dim)
    config = TrainConfig(
        n_way=args.n, k_shot=args.k, n_query=args.q, r_neighbors=args.r,
        n_gen=args.gen, lam=args.lam, strategy=_strategy_arg(args.strategy),
        seed=args.seed,
    )
    report = gradient_check(
        head, episode, config, probes=args.probes, tolerance=args.tol,
        rng=derive_rng(args.seed, "gradcheck-gen"),
    )
    verdict = "PASS" if report.passed else "FAIL"
    print(f"{verdict} max_rel_error={report.max_rel_error:.3e} "
          f"tolerance={report.tolerance:.3e} probes={len(report.probes)}")
    if args.out is not None:
        doc = {
            "passed": bool(report.passed),
            "max_rel_error": float(report.max_rel_error),
            "tolerance": float(report.tolerance),
            "probes": len(report.probes),
        }
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        manifest_config = {**asdict(config), "probes": args.probes, "tol": args.tol,
                           "dim": args.dim, "out": str(args.out)}
        write_manifest("gradcheck", manifest_config, [], [args.out])
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _add_episode_flags(parser: argparse.ArgumentParser, q_default: int, r_default: int) -> None:
    parser.add_argument("--n", type=int, default=5, help="classes per episode")
    parser.add_argument("--k", type=int, default=1, help="support shots per class")
    parser.add_argument("--q", type=int, default=q_default, help="queries per class")
    parser.add_argument("--r", type=int, default=r_default, help="nearest queries per support")
    parser.add_argument("--gen", type=int, default=20, help="generated samples per class")
    parser.add_argument("--strategy", choices=["way", "shot", "none"], default="way")
    parser.add_argument("--allocation", choices=["even", "uniform"], default="even")
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fewgen",
        description="Few-shot text classification with distribution "
                    "estimation and sample generation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="partition classes into seen/valid/unseen")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--seen", type=int, required=True)
    p.add_argument("--valid", type=int, required=True)
    p.add_argument("--unseen", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="split.json")
    p.add_argument("--config", default=None, help="flat JSON config file; flags override")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="optimize a projection head episodically")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--split", default=None, help="split file; defaults to training on all classes")
    _add_episode_flags(p, q_default=25, r_default=10)
    p.add_argument("--lam", type=float, default=0.1, help="generation loss weight")
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--d-out", type=int, default=None, help="projection dim; default keeps input dim")
    p.add_argument("--optimizer", choices=["adamw", "sgd"], default="adamw")
    p.add_argument("--out", default="head.ckpt")
    p.add_argument("--trace", default="trace.csv")
    p.add_argument("--config", default=None, help="flat JSON config file; flags override")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate over episodes from unseen classes")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--split", default=None, help="split file; defaults to all classes unseen")
    p.add_argument("--head", default=None, help="checkpoint; defaults to the identity head")
    _add_episode_flags(p, q_default=25, r_default=10)
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1, help="parallel workers; output identical for any count")
    p.add_argument("--l2-normalize", action="store_true")
    p.add_argument("--preset", choices=sorted(PRESETS), default=None,
                   help="fill q/r for a regime; explicit flags still win")
    p.add_argument("--report", default="report.csv")
    p.add_argument("--config", default=None, help="flat JSON config file; flags override")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic embedding file with known classes")
    p.add_argument("--classes", type=int, default=20)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--per-class", type=int, default=40)
    p.add_argument("--mean-scale", type=float, default=1.0)
    p.add_argument("--cov", choices=["isotropic", "random"], default="isotropic")
    p.add_argument("--cov-scale", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="synth.jsonl")
    p.add_argument("--truth", default=None, help="also write ground-truth class parameters")
    p.add_argument("--config", default=None, help="flat JSON config file; flags override")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gradcheck", help="finite-difference check of the analytic gradients")
    _add_episode_flags(p, q_default=6, r_default=3)
    p.add_argument("--lam", type=float, default=0.1)
    p.add_argument("--probes", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--out", default=None, help="optional JSON report path")
    p.add_argument("--config", default=None, help="flat JSON config file; flags override")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args, argv)
        _apply_preset(args, argv)
        return args.func(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FewgenError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
