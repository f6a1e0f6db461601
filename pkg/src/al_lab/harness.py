"""Experiment loop and evaluation statistics.

One experiment cell = (dataset, strategy, repetition): split, preprocess,
build the kernel matrix once, then acquire labels one at a time, recording
the held-out test error after each acquisition.  Curves are summarized by
their mean error (area under the learning curve), per-repetition ranks,
and pairwise signed-rank significance against a reference strategy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .data import Dataset, FeatureKind, SplitSpec, apply_standardization, split, z_standardize
from .errors import ConfigError, InputError
from .kernels import KernelMatrix, KernelSpec, KernelKind, build_kernel_matrix, kernel_cross, mean_bandwidth
from .model import FrequencyTable, PoolState
from .strategies import StrategyConfig, StrategyKind, score_hypothetical, select

_STRATEGY_CODE = {kind: i for i, kind in enumerate(StrategyKind)}


@dataclass
class LearningCurveRecord:
    """Test misclassification errors after each acquisition of one repetition."""

    dataset: str
    strategy: str
    repetition: int
    seed: int
    errors: list[float]

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "strategy": self.strategy,
            "repetition": self.repetition,
            "seed": self.seed,
            "errors": self.errors,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LearningCurveRecord":
        return cls(
            dataset=d["dataset"],
            strategy=d["strategy"],
            repetition=int(d["repetition"]),
            seed=int(d["seed"]),
            errors=[float(e) for e in d["errors"]],
        )


def _prepare_pool(dataset: Dataset, spec: SplitSpec, stratified: bool):
    """Split, standardize on training statistics, and build kernel structures."""
    train, test = split(dataset, spec, stratified=stratified)
    if dataset.feature_kind is FeatureKind.NUMERIC:
        train_x, stats = z_standardize(train.features)
        test_x = apply_standardization(test.features, stats)
        train = Dataset(
            features=train_x,
            labels=train.labels,
            feature_kind=train.feature_kind,
            name=train.name,
            n_classes=train.n_classes,
            feature_names=train.feature_names,
            row_origin=train.row_origin,
        )
    else:
        test_x = test.features

    if train.feature_kind is FeatureKind.TFIDF:
        kspec = KernelSpec(kind=KernelKind.COSINE)
    else:
        kind = KernelKind.RBF if train.feature_kind is FeatureKind.NUMERIC else KernelKind.HAMMING
        kspec = KernelSpec(kind=kind, gamma=mean_bandwidth(train.n, train.d))
    kernel = build_kernel_matrix(train, kspec)
    test_weights = kernel_cross(test_x, train.features, kspec)
    return train, test, kernel, test_weights


def run_experiment(
    dataset: Dataset,
    strategy: StrategyConfig,
    spec: SplitSpec,
    budget: int,
    stratified: bool = False,
) -> LearningCurveRecord:
    """Run one acquisition loop and record the test error after every label.

    The supervisor is simulated by replaying the dataset's labels.  Test
    predictions use the plain most-frequent-class rule with unsmoothed
    frequencies.  Fully deterministic given (dataset, strategy, seed,
    repetition).
    """
    if budget < 1:
        raise InputError(f"budget must be at least 1, got {budget}")
    train, test, kernel, test_weights = _prepare_pool(dataset, spec, stratified)

    state = PoolState.initial(train.n, train.n_classes)
    pool_freq = FrequencyTable(kernel.values, train.n_classes)
    test_freq = FrequencyTable(test_weights, train.n_classes)
    code = _STRATEGY_CODE[strategy.kind]

    errors: list[float] = []
    for round_no in range(min(budget, train.n)):
        rng = np.random.default_rng(
            np.random.SeedSequence([spec.seed, spec.repetition, code, round_no])
        )
        chosen = select(strategy, state, kernel, train, rng, freq=pool_freq)
        revealed = int(train.labels[chosen])
        state = state.with_label(chosen, revealed)
        pool_freq.add(chosen, revealed)
        test_freq.add(chosen, revealed)
        predictions = np.argmax(test_freq.counts, axis=1)
        errors.append(float((predictions != test.labels).mean()))

    return LearningCurveRecord(
        dataset=dataset.name,
        strategy=strategy.label,
        repetition=spec.repetition,
        seed=spec.seed,
        errors=errors,
    )


def aulc(record) -> float:
    """Area under the learning curve: the mean of the per-acquisition errors."""
    errors = record.errors if isinstance(record, LearningCurveRecord) else record
    if len(errors) == 0:
        raise InputError("cannot average an empty learning curve")
    return float(np.mean(errors))


def mean_ranks(aulc_table: dict[str, Sequence[float]]) -> dict[str, float]:
    """Per-strategy mean rank across repetitions (rank 1 = lowest area).

    Ties receive average ranks, so per-repetition ranks always sum to
    S(S+1)/2 over S strategies.
    """
    strategies = list(aulc_table)
    lengths = {len(v) for v in aulc_table.values()}
    if len(lengths) != 1:
        raise InputError(f"ragged table: repetition counts {sorted(lengths)}")
    values = np.array([aulc_table[s] for s in strategies], dtype=np.float64)
    ranks = np.apply_along_axis(rankdata, 0, values)
    return {s: float(r) for s, r in zip(strategies, ranks.mean(axis=1))}


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    pvalue: float
    degenerate: bool = False


def _exact_signed_rank_p(ranks: np.ndarray, w_low: float) -> float:
    # subset-sum distribution over all 2^n sign assignments
    sums = np.zeros(1)
    for r in ranks:
        sums = np.concatenate([sums, sums + r])
    total = ranks.sum()
    eps = 1e-9
    p = (np.count_nonzero(sums <= w_low + eps) + np.count_nonzero(sums >= total - w_low - eps)) / sums.size
    return min(p, 1.0)


def _approx_signed_rank_p(ranks: np.ndarray, diffs: np.ndarray, w_low: float) -> float:
    n = ranks.size
    mean = n * (n + 1) / 4.0
    tie_groups = np.unique(np.abs(diffs), return_counts=True)[1]
    var = n * (n + 1) * (2 * n + 1) / 24.0 - ((tie_groups**3 - tie_groups).sum()) / 48.0
    if var <= 0:
        return 1.0
    # continuity correction toward the mean
    z = (w_low - mean + 0.5) / math.sqrt(var)
    return min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))


def wilcoxon_signed_rank(a, b) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped (if all are zero the result is degenerate
    with p = 1).  The null distribution is enumerated exactly over sign
    assignments for up to 20 pairs; larger samples use the normal
    approximation with tie and continuity corrections.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"paired samples must have equal length: {a.shape} vs {b.shape}")
    diffs = a - b
    diffs = diffs[diffs != 0.0]
    if diffs.size == 0:
        return WilcoxonResult(statistic=0.0, pvalue=1.0, degenerate=True)
    if diffs.size < 5:
        raise InputError(f"need at least 5 nonzero differences, got {diffs.size}")

    ranks = rankdata(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())
    w_minus = float(ranks[diffs < 0].sum())
    w_low = min(w_plus, w_minus)
    if diffs.size <= 20:
        p = _exact_signed_rank_p(ranks, w_low)
    else:
        p = _approx_signed_rank_p(ranks, diffs, w_low)
    return WilcoxonResult(statistic=w_low, pvalue=p)


def significance_stars(p: float, direction: int) -> str:
    """Annotation for a pairwise test: stars when the reference wins,
    daggers when the competitor wins, blank when not significant."""
    if not 0.0 <= p <= 1.0:
        raise InputError(f"p-value outside [0, 1]: {p}")
    if direction == 0:
        return ""
    symbol = "*" if direction > 0 else "†"
    for threshold, count in ((0.001, 3), (0.01, 2), (0.05, 1)):
        if p <= threshold:
            return symbol * count
    return ""


@dataclass(frozen=True)
class RankSummary:
    """Cross-dataset rank aggregation against a reference strategy.

    ``wins_ties_losses`` counts, per competitor and significance level, the
    datasets where the reference is significantly better / neither side is /
    the competitor is (the (a/b/c) pattern of the rank plots).
    """

    per_dataset: dict[str, dict[str, float]]
    overall: dict[str, float]
    wins_ties_losses: dict[str, dict[float, tuple[int, int, int]]]
    reference: str


_SIGNIFICANCE_LEVELS = (0.001, 0.01, 0.05)


def _pairwise_direction(ref_areas: np.ndarray, other_areas: np.ndarray) -> int:
    """+1 when the reference tends to the lower area, -1 the other way."""
    diffs = (ref_areas - other_areas)[ref_areas != other_areas]
    if diffs.size == 0:
        return 0
    ranks = rankdata(np.abs(diffs))
    lean = ranks[diffs < 0].sum() - ranks[diffs > 0].sum()
    return 1 if lean > 0 else (-1 if lean < 0 else 0)


def rank_summary(records: Sequence[LearningCurveRecord], reference: str = "xpal") -> RankSummary:
    """Mean ranks per dataset and overall, plus win/tie/loss counts."""
    by_dataset: dict[str, dict[str, dict[int, float]]] = {}
    for rec in records:
        by_dataset.setdefault(rec.dataset, {}).setdefault(rec.strategy, {})[rec.repetition] = aulc(rec)

    per_dataset: dict[str, dict[str, float]] = {}
    outcomes: dict[str, dict[float, list[int]]] = {}
    for ds_name in sorted(by_dataset):
        strategies = by_dataset[ds_name]
        common_reps = sorted(set.intersection(*(set(v) for v in strategies.values())))
        table = {s: [strategies[s][r] for r in common_reps] for s in sorted(strategies)}
        per_dataset[ds_name] = mean_ranks(table)
        if reference not in table:
            continue
        ref_areas = np.array(table[reference])
        for strat, areas in table.items():
            if strat == reference:
                continue
            counts = outcomes.setdefault(strat, {lvl: [0, 0, 0] for lvl in _SIGNIFICANCE_LEVELS})
            try:
                result = wilcoxon_signed_rank(ref_areas, np.array(areas))
            except InputError:
                result = None
            direction = _pairwise_direction(ref_areas, np.array(areas))
            for level in _SIGNIFICANCE_LEVELS:
                significant = result is not None and not result.degenerate and result.pvalue <= level
                if significant and direction > 0:
                    counts[level][0] += 1
                elif significant and direction < 0:
                    counts[level][2] += 1
                else:
                    counts[level][1] += 1

    strategies_seen = sorted({s for ranks in per_dataset.values() for s in ranks})
    overall = {
        s: float(np.mean([ranks[s] for ranks in per_dataset.values() if s in ranks]))
        for s in strategies_seen
    }
    return RankSummary(
        per_dataset=per_dataset,
        overall=overall,
        wins_ties_losses={
            s: {lvl: tuple(v) for lvl, v in levels.items()} for s, levels in outcomes.items()
        },
        reference=reference,
    )


def summarize(records: Sequence[LearningCurveRecord], reference: str = "xpal") -> list[dict]:
    """Per (dataset, strategy) summary rows: mean/std area, mean rank, and
    significance against the reference strategy."""
    by_dataset: dict[str, dict[str, dict[int, float]]] = {}
    for rec in records:
        by_dataset.setdefault(rec.dataset, {}).setdefault(rec.strategy, {})[rec.repetition] = aulc(rec)

    rows = []
    for ds_name in sorted(by_dataset):
        strategies = by_dataset[ds_name]
        common_reps = sorted(set.intersection(*(set(v) for v in strategies.values())))
        table = {s: [strategies[s][r] for r in common_reps] for s in sorted(strategies)}
        ranks = mean_ranks(table) if common_reps else {s: float("nan") for s in table}
        for strat, areas in table.items():
            areas_arr = np.array(areas)
            row = {
                "dataset": ds_name,
                "strategy": strat,
                "mean_aulc": float(areas_arr.mean()) if areas else float("nan"),
                "std_aulc": float(areas_arr.std(ddof=1)) if len(areas) > 1 else 0.0,
                "mean_rank": ranks[strat],
                "p_vs_reference": "",
                "annotation": "",
            }
            if strat != reference and reference in table:
                ref = np.array(table[reference])
                try:
                    result = wilcoxon_signed_rank(ref, areas_arr)
                except InputError:
                    result = None
                if result is not None and not result.degenerate:
                    direction = _pairwise_direction(ref, areas_arr)
                    row["p_vs_reference"] = f"{result.pvalue:.6g}"
                    row["annotation"] = significance_stars(result.pvalue, direction)
                elif result is not None:
                    row["p_vs_reference"] = "1"
            rows.append(row)
    return rows


def records_to_jsonl(records: Sequence[LearningCurveRecord], path) -> None:
    """Write records as JSONL in a canonical order (bitwise reproducible)."""
    ordered = sorted(records, key=lambda r: (r.dataset, r.strategy, r.repetition))
    with open(path, "w", encoding="utf-8") as fh:
        for rec in ordered:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def records_from_jsonl(path) -> list[LearningCurveRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(LearningCurveRecord.from_dict(json.loads(line)))
    return records


def write_summary_csv(rows: Sequence[dict], path) -> None:
    columns = ["dataset", "strategy", "mean_aulc", "std_aulc", "mean_rank", "p_vs_reference", "annotation"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            cells = []
            for col in columns:
                v = row[col]
                cells.append(f"{v:.6f}" if isinstance(v, float) else str(v))
            fh.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------------
# usefulness landscapes
# ---------------------------------------------------------------------------


def landscape(
    dataset: Dataset,
    strategy: StrategyConfig,
    labeled_mode: str = "strategy",
    n_labels: int = 8,
    resolution: int = 60,
    seed: int = 0,
):
    """Score a 2-D grid of hypothetical candidates over the whole dataset.

    Acquires ``n_labels`` labels first (chosen by the strategy itself or
    uniformly at random), then evaluates the strategy's usefulness score at
    every grid point without mutating the pool.  Returns grid coordinates
    and scores in the dataset's original units plus the labeled points.
    """
    if dataset.feature_kind is not FeatureKind.NUMERIC or dataset.d != 2:
        raise InputError("landscapes need a 2-D numeric dataset")
    if labeled_mode not in ("strategy", "random"):
        raise InputError(f"unknown labeled_mode {labeled_mode!r}")

    features, stats = z_standardize(dataset.features)
    pool = Dataset(
        features=features,
        labels=dataset.labels,
        feature_kind=dataset.feature_kind,
        name=dataset.name,
        n_classes=dataset.n_classes,
        feature_names=dataset.feature_names,
    )
    kspec = KernelSpec(kind=KernelKind.RBF, gamma=mean_bandwidth(pool.n, pool.d))
    kernel = build_kernel_matrix(pool, kspec)

    state = PoolState.initial(pool.n, pool.n_classes)
    freq = FrequencyTable(kernel.values, pool.n_classes)
    labeled_points = []
    for round_no in range(min(n_labels, pool.n)):
        rng = np.random.default_rng(np.random.SeedSequence([seed, round_no]))
        if labeled_mode == "strategy":
            chosen = select(strategy, state, kernel, pool, rng, freq=freq)
        else:
            cand = state.candidate_array()
            chosen = int(cand[rng.integers(cand.size)])
        revealed = int(pool.labels[chosen])
        state = state.with_label(chosen, revealed)
        freq.add(chosen, revealed)
        labeled_points.append((*dataset.features[chosen], revealed))

    lo = features.min(axis=0)
    hi = features.max(axis=0)
    pad = 0.05 * (hi - lo)
    xs = np.linspace(lo[0] - pad[0], hi[0] + pad[0], resolution)
    ys = np.linspace(lo[1] - pad[1], hi[1] + pad[1], resolution)
    grid_rng = np.random.default_rng(np.random.SeedSequence([seed, 2**32]))

    grid = np.empty((resolution * resolution, 2))
    scores = np.empty(resolution * resolution)
    mean, std = stats
    safe_std = np.where(std == 0.0, 1.0, std)
    for gy, y in enumerate(ys):
        for gx, x in enumerate(xs):
            i = gy * resolution + gx
            point = np.array([x, y])
            scores[i] = score_hypothetical(strategy, state, kernel, pool, point, grid_rng, freq=freq)
            grid[i] = point * safe_std + mean
    return grid, scores, labeled_points
