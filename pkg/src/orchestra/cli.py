"""Command-line entry point: optimize | evaluate | simulate | export."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from collections import Counter, defaultdict
from pathlib import Path

from . import experiments
from .config import RunConfig
from .errors import (
    ConfigError,
    ContractError,
    InputDomainError,
    OrchestraError,
    SnapshotFormatError,
    StreamValidationError,
)
from .orchestrator import Mode
from .persistence import (
    ENTRY_FIELDS,
    atomic_write,
    export_trajectories,
    load_snapshot_with_params,
    read_query_stream,
    save_snapshot,
)
from .query import require_truth

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_RUNTIME = 4

log = logging.getLogger("orchestra")


def _write_json(path: Path, doc) -> None:
    atomic_write(path, json.dumps(doc, indent=2, allow_nan=False) + "\n")


def _load_stream(cfg: RunConfig):
    if not cfg.stream:
        raise ConfigError("no query stream given (--stream or config 'stream')")
    return list(read_query_stream(cfg.stream, cfg.n_per_category, cfg.seed))


def _accuracy_table(results) -> dict:
    per_cat: dict[str, list[bool]] = defaultdict(list)
    for r in results:
        if r.agreement is not None:
            per_cat[r.category].append(r.agreement)
    scored = [x for v in per_cat.values() for x in v]
    return {
        "per_category": {c: sum(v) / len(v) for c, v in sorted(per_cat.items())},
        "overall": sum(scored) / len(scored) if scored else None,
        "scored": len(scored),
        "total": len(results),
    }


def score_table(store) -> list[dict]:
    return [
        {
            "agent_id": a,
            "role_id": r,
            "category_id": c,
            "pos_count": e.pos_count,
            "neg_count": e.neg_count,
            "ema_short": e.ema_short,
            "ema_long": e.ema_long,
            "score": e.score,
        }
        for (a, r, c), e in store.items()
    ]


def cmd_optimize(cfg: RunConfig) -> dict:
    queries = _load_stream(cfg)
    require_truth(queries)
    out = Path(cfg.out_dir)
    store = None
    if cfg.snapshot_in:
        store, _ = load_snapshot_with_params(cfg.snapshot_in)
    orch = cfg.build_orchestrator(store)
    try:
        results, rows = experiments.optimize(orch, queries)
    finally:
        orch.close()
    snapshot_path = Path(cfg.snapshot_out) if cfg.snapshot_out else out / "snapshot.json"
    save_snapshot(orch.store, snapshot_path, cfg.hyperparams)
    export_trajectories(rows, out / "trajectories.csv")
    summary = {
        "steps": orch.store.step,
        "category_counts": dict(sorted(orch.store.category_counts.items())),
        "accuracy": _accuracy_table(results),
        "flagged_steps": sum(1 for r in results if r.flags),
        "scores": score_table(orch.store),
        "snapshot": str(snapshot_path),
        "trajectories": str(out / "trajectories.csv"),
    }
    _write_json(out / "summary.json", summary)
    print(f"optimized {len(results)} queries; accuracy during optimization: {_fmt(summary['accuracy']['overall'])}")
    for cat, acc in summary["accuracy"]["per_category"].items():
        print(f"  {cat:<18} {_fmt(acc)}")
    print(f"snapshot -> {snapshot_path}")
    return summary


def cmd_evaluate(cfg: RunConfig) -> dict:
    if not cfg.snapshot_in:
        raise ConfigError("evaluate needs --snapshot-in")
    store, params = load_snapshot_with_params(cfg.snapshot_in)
    queries = _load_stream(cfg)
    # Routing must use the hyperparameters the snapshot was optimized with.
    orch = cfg.with_overrides(hyperparams=params).build_orchestrator(store)
    try:
        results = orch.run_stream(queries, Mode.EVALUATE)
    finally:
        orch.close()
    histogram: dict[str, Counter] = defaultdict(Counter)
    for r in results:
        for a in r.plan.assignments:
            histogram[r.category][f"{a.agent_id}/{a.role_id}"] += 1
    report = {
        "accuracy": _accuracy_table(results),
        "routing": {c: dict(sorted(h.items())) for c, h in sorted(histogram.items())},
        "flagged_steps": sum(1 for r in results if r.flags),
        "answers": {r.query_id: r.final_answer.to_json() for r in results},
    }
    _write_json(Path(cfg.out_dir) / "report.json", report)
    print(f"evaluated {len(results)} queries; accuracy: {_fmt(report['accuracy']['overall'])}")
    for cat, acc in report["accuracy"]["per_category"].items():
        print(f"  {cat:<18} {_fmt(acc)}")
    return report


def cmd_simulate(cfg: RunConfig) -> dict:
    if not cfg.pool:
        cfg = experiments.specialization_config(cfg.seed).with_overrides(
            out_dir=cfg.out_dir, simulate=cfg.simulate
        )
    if not cfg.simulated_only:
        raise ConfigError("simulate supports simulated agents only")
    opts = {"trials": 50, "levels": list(experiments.ABLATION_ORDER), "sizes": list(experiments.DEFAULT_SIZES),
            "n_opt": 150, "n_eval": 500}
    unknown = set(cfg.simulate) - set(opts)
    if unknown:
        raise ConfigError(f"unknown simulate options {sorted(unknown)}")
    opts.update(cfg.simulate)
    seeds = [cfg.seed + i for i in range(int(opts["trials"]))]
    ablation = experiments.ablation_study(cfg, seeds, opts["levels"], opts["n_opt"], opts["n_eval"])
    sweep = experiments.size_sweep(cfg, seeds, opts["sizes"], opts["n_eval"])
    report = {"options": opts, "seeds": [seeds[0], seeds[-1]], "ablation": ablation, "size_sweep": sweep}
    _write_json(Path(cfg.out_dir) / "simulate.json", report)
    print(f"{'level':<12} {'routing(opt)':>12} {'routing(eval)':>13} {'acc(eval)':>10}")
    for row in ablation:
        print(f"{row['level']:<12} {row['routing_correctness']:>12.4f} "
              f"{row['eval_routing_correctness']:>13.4f} {row['eval_accuracy']:>10.4f}")
    print(f"{'size':<12} {'routing(eval)':>13} {'acc(eval)':>10}")
    for row in sweep:
        print(f"{row['size']:<12} {row['eval_routing_correctness']:>13.4f} {row['eval_accuracy']:>10.4f}")
    return report


def cmd_export(cfg: RunConfig) -> str:
    if not cfg.snapshot_in:
        raise ConfigError("export needs --snapshot-in")
    store, _ = load_snapshot_with_params(cfg.snapshot_in)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, ENTRY_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in score_table(store):
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    path = Path(cfg.out_dir) / "scores.csv"
    atomic_write(path, buf.getvalue())
    print(f"{len(store.entries)} entries -> {path}")
    return str(path)


COMMANDS = {"optimize": cmd_optimize, "evaluate": cmd_evaluate, "simulate": cmd_simulate, "export": cmd_export}


def _fmt(x) -> str:
    return "n/a" if x is None else f"{x:.4f}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orchestra", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--stream", help="JSONL query stream")
        p.add_argument("--snapshot-in", dest="snapshot_in")
        p.add_argument("--snapshot-out", dest="snapshot_out")
        p.add_argument("--seed", type=int)
        p.add_argument("--parallelism", type=int)
        p.add_argument("--out-dir", dest="out_dir")
        p.add_argument("--n-per-category", dest="n_per_category", type=int)
        p.add_argument("--ablation")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        mode = Mode.EVALUATE if args.command == "evaluate" else Mode.OPTIMIZE
        cfg = cfg.with_overrides(
            stream=args.stream,
            snapshot_in=args.snapshot_in,
            snapshot_out=args.snapshot_out,
            seed=args.seed,
            parallelism=args.parallelism,
            out_dir=args.out_dir,
            n_per_category=args.n_per_category,
            ablation=args.ablation,
            mode=mode,
        )
        COMMANDS[args.command](cfg)
    except (ConfigError, InputDomainError, ContractError, StreamValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, SnapshotFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OrchestraError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
