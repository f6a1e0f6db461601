"""Command-line interface.

Subcommands: ``run`` (benchmark cells to JSONL + summary CSV),
``report`` (re-summarize existing JSONL), ``landscape`` (usefulness grid
for a 2-D dataset), ``scaling`` (per-acquisition timing on synthetic
blobs).  All options can come from a JSON config file; flags win.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    Dataset,
    FeatureKind,
    SplitSpec,
    dataset_from_manifest,
    load_csv,
    load_manifest,
    synthetic_blobs,
)
from .errors import ConfigError, IngestionError, InputError, SplitError
from .harness import (
    LearningCurveRecord,
    records_from_jsonl,
    records_to_jsonl,
    run_experiment,
    summarize,
    write_summary_csv,
    landscape,
)
from .kernels import KernelKind, KernelSpec, build_kernel_matrix, mean_bandwidth
from .model import FrequencyTable, PoolState
from .strategies import StrategyConfig, StrategyKind, select

_ENV_WORKERS = "AL_LAB_WORKERS"


@dataclass
class RunConfig:
    datasets: list[str] = field(default_factory=list)
    strategies: list[StrategyConfig] = field(default_factory=list)
    repetitions: int = 100
    budget: int = 200
    alpha: float = 1e-3
    alpha_sweep: list[float] | None = None
    seed: int = 0
    workers: int = 1
    out: str = "results.jsonl"
    stratified: bool = False
    label_column: str = "class"
    manifest: str | None = None

    def validate(self):
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be at least 1, got {self.repetitions}")
        if self.budget < 1:
            raise ConfigError(f"budget must be at least 1, got {self.budget}")
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        if not self.datasets:
            raise ConfigError("at least one dataset is required")

    def echo(self) -> dict:
        d = {
            "datasets": self.datasets,
            "strategies": [s.label for s in self.strategies],
            "repetitions": self.repetitions,
            "budget": self.budget,
            "alpha": self.alpha,
            "alpha_sweep": self.alpha_sweep,
            "seed": self.seed,
            "stratified": self.stratified,
            "label_column": self.label_column,
        }
        return d


def _parse_strategy(entry, alpha: float) -> StrategyConfig:
    if isinstance(entry, str):
        return StrategyConfig(kind=StrategyKind(entry), alpha=alpha)
    params = dict(entry)
    kind = StrategyKind(params.pop("kind"))
    prior = params.pop("epsilon", None) if kind is StrategyKind.EER else None
    if prior is None:
        prior = params.pop("alpha", alpha)
    return StrategyConfig(
        kind=kind,
        alpha=float(prior),
        committee_size=int(params.pop("committee_size", 25)),
        seed=int(params.pop("seed", 0)),
    )


def _build_run_config(args) -> RunConfig:
    raw: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            raw = json.load(fh)
    cfg = RunConfig()
    cfg.manifest = raw.get("manifest")
    cfg.repetitions = int(raw.get("repetitions", cfg.repetitions))
    cfg.budget = int(raw.get("budget", cfg.budget))
    cfg.alpha = float(raw.get("alpha", cfg.alpha))
    cfg.alpha_sweep = raw.get("alpha_sweep")
    cfg.seed = int(raw.get("seed", cfg.seed))
    cfg.workers = int(raw.get("workers", os.environ.get(_ENV_WORKERS, cfg.workers)))
    cfg.out = raw.get("out", cfg.out)
    cfg.stratified = bool(raw.get("stratified", cfg.stratified))
    cfg.label_column = raw.get("label_column", cfg.label_column)
    cfg.datasets = list(raw.get("datasets", []))
    raw_strategies = list(raw.get("strategies", []))

    # flags win over the config file
    if args.datasets:
        cfg.datasets = args.datasets.split(",")
    if args.reps is not None:
        cfg.repetitions = args.reps
    if args.budget is not None:
        cfg.budget = args.budget
    if args.alpha is not None:
        cfg.alpha = args.alpha
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out is not None:
        cfg.out = args.out
    if args.stratified:
        cfg.stratified = True
    if args.label_column is not None:
        cfg.label_column = args.label_column
    if args.strategies:
        raw_strategies = args.strategies.split(",")

    cfg.strategies = [_parse_strategy(s, cfg.alpha) for s in raw_strategies]
    if cfg.alpha_sweep:
        swept = []
        for strat in cfg.strategies:
            if strat.kind is StrategyKind.XPAL:
                swept.extend(
                    StrategyConfig(kind=StrategyKind.XPAL, alpha=float(a)) for a in cfg.alpha_sweep
                )
            else:
                swept.append(strat)
        cfg.strategies = swept
    cfg.validate()
    return cfg


def _resolve_datasets(cfg: RunConfig) -> dict[str, Dataset]:
    entries = {e["name"]: e for e in load_manifest(cfg.manifest)}
    out = {}
    for name in cfg.datasets:
        path = Path(name)
        if path.suffix == ".csv":
            if not path.exists():
                raise ConfigError(f"dataset file not found: {path}")
            out[path.stem] = load_csv(path, FeatureKind.NUMERIC, label_column=cfg.label_column)
        elif name in entries:
            out[name] = dataset_from_manifest(entries[name], label_column=cfg.label_column)
        else:
            raise ConfigError(f"unknown dataset {name!r} (not in manifest, not a CSV path)")
    return out


def _run_cell(job) -> LearningCurveRecord:
    dataset, strategy, spec, budget, stratified = job
    return run_experiment(dataset, strategy, spec, budget, stratified=stratified)


def _config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(json.dumps(cfg.echo(), sort_keys=True).encode()).hexdigest()[:16]


def cmd_run(args) -> int:
    cfg = _build_run_config(args)
    datasets = _resolve_datasets(cfg)
    out_path = Path(cfg.out)
    partial_path = out_path.with_suffix(out_path.suffix + ".partial")
    resume_path = out_path.with_suffix(out_path.suffix + ".resume.json")
    cfg_hash = _config_hash(cfg)

    done: dict[tuple, LearningCurveRecord] = {}
    if resume_path.exists():
        with open(resume_path, encoding="utf-8") as fh:
            marker = json.load(fh)
        if marker.get("config_hash") == cfg_hash and partial_path.exists():
            for rec in records_from_jsonl(partial_path):
                done[(rec.dataset, rec.strategy, rec.repetition)] = rec
            print(f"resuming: {len(done)} cells already complete", file=sys.stderr)

    jobs = []
    for name, dataset in datasets.items():
        for strategy in cfg.strategies:
            for rep in range(cfg.repetitions):
                if (dataset.name, strategy.label, rep) in done:
                    continue
                spec = SplitSpec(seed=cfg.seed, repetition=rep)
                jobs.append((dataset, strategy, spec, cfg.budget, cfg.stratified))

    records = list(done.values())
    try:
        if cfg.workers > 1 and jobs:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                for rec in pool.map(_run_cell, jobs):
                    records.append(rec)
        else:
            for job in jobs:
                records.append(_run_cell(job))
    except BaseException:
        records_to_jsonl(records, partial_path)
        with open(resume_path, "w", encoding="utf-8") as fh:
            json.dump({"config_hash": cfg_hash, "completed": len(records)}, fh)
        print(f"interrupted: partial results in {partial_path}", file=sys.stderr)
        raise

    records_to_jsonl(records, out_path)
    with open(out_path.with_suffix(".config.json"), "w", encoding="utf-8") as fh:
        json.dump(cfg.echo(), fh, sort_keys=True, indent=2)
    reference = "xpal" if any(s.kind is StrategyKind.XPAL for s in cfg.strategies) else cfg.strategies[0].label
    write_summary_csv(summarize(records, reference=reference), out_path.with_suffix(".summary.csv"))
    partial_path.unlink(missing_ok=True)
    resume_path.unlink(missing_ok=True)
    print(f"wrote {len(records)} records to {out_path}")
    return 0


def cmd_report(args) -> int:
    records = records_from_jsonl(args.infile)
    if not records:
        raise ConfigError(f"no records in {args.infile}")
    labels = {r.strategy for r in records}
    reference = "xpal" if "xpal" in labels else sorted(labels)[0]
    write_summary_csv(summarize(records, reference=reference), args.out)
    print(f"wrote summary to {args.out}")
    return 0


def cmd_landscape(args) -> int:
    path = Path(args.dataset)
    if path.suffix == ".csv":
        if not path.exists():
            raise ConfigError(f"dataset file not found: {path}")
        dataset = load_csv(path, FeatureKind.NUMERIC, label_column=args.label_column or "class")
    else:
        entries = {e["name"]: e for e in load_manifest(None)}
        if args.dataset not in entries:
            raise ConfigError(f"unknown dataset {args.dataset!r}")
        dataset = dataset_from_manifest(entries[args.dataset], label_column=args.label_column or "class")

    strategy = StrategyConfig(kind=StrategyKind(args.strategy), alpha=args.alpha or 1e-3)
    grid, scores, labeled = landscape(
        dataset,
        strategy,
        labeled_mode="strategy" if args.mode == "strategy-chosen" else args.mode,
        n_labels=args.labels,
        resolution=args.resolution,
        seed=args.seed or 0,
    )
    out_path = Path(args.out)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("x,y,score\n")
        for (x, y), s in zip(grid, scores):
            fh.write(f"{x!r},{y!r},{s!r}\n")
    labels_path = out_path.with_name(out_path.stem + "_labels" + out_path.suffix)
    with open(labels_path, "w", encoding="utf-8") as fh:
        fh.write("x,y,class\n")
        for x, y, cls in labeled:
            fh.write(f"{x!r},{y!r},{cls}\n")
    print(f"wrote {len(scores)} grid scores to {out_path}, labels to {labels_path}")
    return 0


def _time_strategy(dataset: Dataset, strategy: StrategyConfig, budget: int, seed: int) -> float:
    """Mean selection time per acquisition on the full dataset as the pool."""
    spec = KernelSpec(kind=KernelKind.RBF, gamma=mean_bandwidth(dataset.n, dataset.d))
    kernel = build_kernel_matrix(dataset, spec)
    state = PoolState.initial(dataset.n, dataset.n_classes)
    freq = FrequencyTable(kernel.values, dataset.n_classes)
    elapsed = 0.0
    rounds = min(budget, dataset.n)
    for round_no in range(rounds):
        rng = np.random.default_rng(np.random.SeedSequence([seed, round_no]))
        start = time.perf_counter()
        chosen = select(strategy, state, kernel, dataset, rng, freq=freq)
        elapsed += time.perf_counter() - start
        revealed = int(dataset.labels[chosen])
        state = state.with_label(chosen, revealed)
        freq.add(chosen, revealed)
    return elapsed / rounds


def cmd_scaling(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    class_counts = [int(c) for c in args.class_counts.split(",")]
    strategies = [
        StrategyConfig(kind=StrategyKind(s), alpha=args.alpha or 1e-3)
        for s in (args.strategies or "xpal,eer,us").split(",")
    ]
    seed = args.seed or 0
    rows = []
    for n in sizes:
        for c in class_counts:
            dataset = synthetic_blobs(n, c, seed)
            for strategy in strategies:
                secs = _time_strategy(dataset, strategy, args.budget or 10, seed)
                rows.append((strategy.label, n, c, secs))
                print(f"{strategy.label}: n={n} c={c} {secs:.4f}s/acq", file=sys.stderr)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("strategy,n,c,seconds_per_acquisition\n")
        for label, n, c, secs in rows:
            fh.write(f"{label},{n},{c},{secs!r}\n")
    print(f"wrote {len(rows)} timing rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="al-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run benchmark cells and summarize")
    run_p.add_argument("--config", help="JSON config file")
    run_p.add_argument("--datasets", help="comma-separated dataset names or CSV paths")
    run_p.add_argument("--strategies", help="comma-separated strategy names")
    run_p.add_argument("--reps", type=int)
    run_p.add_argument("--budget", type=int)
    run_p.add_argument("--alpha", type=float)
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--workers", type=int)
    run_p.add_argument("--out")
    run_p.add_argument("--stratified", action="store_true")
    run_p.add_argument("--label-column", dest="label_column")
    run_p.set_defaults(func=cmd_run)

    rep_p = sub.add_parser("report", help="summarize an existing JSONL results file")
    rep_p.add_argument("--in", dest="infile", required=True)
    rep_p.add_argument("--out", required=True)
    rep_p.set_defaults(func=cmd_report)

    land_p = sub.add_parser("landscape", help="usefulness grid over a 2-D dataset")
    land_p.add_argument("--dataset", required=True)
    land_p.add_argument("--strategy", required=True)
    land_p.add_argument(
        "--mode", choices=["strategy-chosen", "strategy", "random"], default="strategy-chosen"
    )
    land_p.add_argument("--labels", type=int, default=8)
    land_p.add_argument("--resolution", type=int, default=60)
    land_p.add_argument("--alpha", type=float)
    land_p.add_argument("--seed", type=int)
    land_p.add_argument("--label-column", dest="label_column")
    land_p.add_argument("--out", required=True)
    land_p.set_defaults(func=cmd_landscape)

    scale_p = sub.add_parser("scaling", help="per-acquisition timing on synthetic blobs")
    scale_p.add_argument("--sizes", default="500,1000,1500,2000,2500")
    scale_p.add_argument("--class-counts", dest="class_counts", default="2,4,6")
    scale_p.add_argument("--strategies")
    scale_p.add_argument("--budget", type=int)
    scale_p.add_argument("--alpha", type=float)
    scale_p.add_argument("--seed", type=int)
    scale_p.add_argument("--out", required=True)
    scale_p.set_defaults(func=cmd_scaling)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, IngestionError, InputError, SplitError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
