"""Acceptance suite.

Each test prints one ``[ACCEPTANCE] criterion N: PASS/FAIL`` line (run with
``pytest -s tests/test_acceptance.py`` to see them) and enforces the
criterion at its stated tolerance.  Benchmark-table criteria need the
bundled dataset fixtures; a missing fixture is a hard failure that names
the file to supply, not a skip.
"""

import numpy as np
import pytest

from al_lab.cli import _time_strategy, main
from al_lab.data import SplitSpec, dataset_from_manifest, load_manifest, synthetic_blobs, write_csv
from al_lab.harness import (
    aulc,
    mean_ranks,
    run_experiment,
    wilcoxon_signed_rank,
    _approx_signed_rank_p,
)
from al_lab.kernels import KernelSpec, KernelKind, build_kernel_matrix
from al_lab.model import (
    PoolState,
    kernel_frequency,
    posterior_predictive,
    risk_difference,
    smoothed_empirical_risk,
    symmetric_prior,
)
from al_lab.strategies import (
    StrategyConfig,
    StrategyKind,
    eer_score,
    instrument_fast_path,
    pal_score,
    us_score,
    xgain,
)

from conftest import identity_kernel, random_pool
from test_strategies import eer_one_minus_max, pal_original, us_least_confidence

AULC_TARGETS = {"iris": 0.084, "seeds": 0.097, "wine": 0.067}
AULC_TOLERANCE = 0.02
BENCH_REPS = 50
BENCH_BUDGET = 200
PRIOR_GRID = (1e-3, 1e-2, 1e-1, 1.0)
PRIOR_REPS = 20
PRIOR_TOLERANCE = 0.02


def _report(criterion: str, passed: bool, detail: str = ""):
    print(f"\n[ACCEPTANCE] criterion {criterion}: {'PASS' if passed else 'FAIL'} {detail}")


def _benchmark_dataset(name: str):
    entries = {e["name"]: e for e in load_manifest()}
    try:
        return dataset_from_manifest(entries[name])
    except Exception as exc:
        _report("4/5 prerequisite", False, f"dataset {name!r} unavailable")
        pytest.fail(
            f"the {name!r} fixture is not available in this build: {exc} -- "
            f"supply {name}.csv (UTF-8, header row, label column 'class') next to the "
            f"packaged manifest and this criterion runs unmodified"
        )


def _mean_aulc(dataset, strategy, reps=BENCH_REPS, budget=BENCH_BUDGET, seed=1):
    areas = [
        aulc(run_experiment(dataset, strategy, SplitSpec(seed=seed, repetition=r), budget))
        for r in range(reps)
    ]
    return float(np.mean(areas))


class TestCriterion1TheoremOracles:
    def test_theorem_oracle_suite(self, rng):
        worst = {"us": 0.0, "pal": 0.0, "eer": 0.0}
        checked = 0
        while checked < 110:
            _, kernel, state = random_pool(rng, max_classes=4)
            if not state.candidates:
                continue
            cand = int(rng.choice(sorted(state.candidates)))
            k = kernel_frequency(state, kernel, cand)
            worst["us"] = max(worst["us"], abs(us_score(cand, state, kernel) - us_least_confidence(k)))
            density = float(rng.uniform(0.0, 2.0))
            worst["pal"] = max(
                worst["pal"], abs(pal_score(cand, state, kernel, density) - pal_original(k, density))
            )
            eps = symmetric_prior(float(rng.uniform(1e-4, 2.0)), state.n_classes)
            worst["eer"] = max(
                worst["eer"],
                abs(eer_score(cand, state, kernel, eps) - (-eer_one_minus_max(cand, state, kernel, eps))),
            )
            checked += 1
        ok = worst["us"] <= 1e-12 and worst["eer"] <= 1e-12 and worst["pal"] <= 1e-9
        _report("1", ok, f"max deviations over {checked} instances: {worst}")
        assert ok, worst


class TestCriterion2HandFixtures:
    def test_hand_derived_fixtures(self):
        kernel = identity_kernel(2)
        state = PoolState.initial(2, 2)
        alpha = symmetric_prior(1e-3, 2)
        values = {
            "xgain": (xgain(0, state, kernel, alpha, np.arange(2)), 0.24950099800399198, 0.2495),
            "pal": (pal_score(0, state, kernel, density=1.0), 1.0 / 6.0, 1 / 6),
            "eer": (eer_score(0, state, kernel, alpha), -0.250499001996008, -0.250499),
        }
        posterior = posterior_predictive(np.array([2.0, 1.0]), np.ones(2))
        ok = np.allclose(posterior, [0.6, 0.4], atol=1e-12)
        deviations = {"posterior": float(np.abs(posterior - [0.6, 0.4]).max())}
        for name, (got, derived, display) in values.items():
            deviations[name] = abs(got - derived)
            ok &= abs(got - derived) <= 1e-12 and abs(got - display) <= 1e-6
        _report("2", bool(ok), f"deviations from committed oracles: {deviations}")
        assert ok, deviations


class TestCriterion3FastPathEquivalence:
    def test_fast_path_equals_full_sum(self, rng):
        worst = 0.0
        checked = 0
        while checked < 200:
            _, kernel, state = random_pool(rng, max_n=12, max_classes=3)
            if not state.candidates:
                continue
            cand = int(rng.choice(sorted(state.candidates)))
            y = int(rng.integers(0, state.n_classes))
            plus = state.with_label(cand, y)
            prior = symmetric_prior(float(rng.uniform(1e-4, 1.0)), state.n_classes)
            e = np.arange(kernel.n)
            fast = risk_difference(plus, state, kernel, prior, e)
            full = smoothed_empirical_risk(plus, plus, kernel, prior, e) - smoothed_empirical_risk(
                plus, state, kernel, prior, e
            )
            worst = max(worst, abs(fast - full))
            checked += 1
        ok = worst <= 1e-12
        _report("3", ok, f"max |fast - full| over {checked} pools: {worst:.3e}")
        assert ok, worst


class TestCriterion4BenchmarkReproduction:
    @pytest.mark.parametrize("name", ["iris", "seeds", "wine"])
    def test_aulc_matches_reported_value(self, name):
        dataset = _benchmark_dataset(name)
        mean = _mean_aulc(dataset, StrategyConfig(kind=StrategyKind.XPAL, alpha=1e-3))
        target = AULC_TARGETS[name]
        ok = abs(mean - target) <= AULC_TOLERANCE
        _report(f"4 ({name})", ok, f"mean AULC {mean:.4f} vs {target:.3f} +/- {AULC_TOLERANCE}")
        assert ok, (name, mean, target)

    def test_iris_orderings(self):
        dataset = _benchmark_dataset("iris")
        means = {
            kind.value: _mean_aulc(dataset, StrategyConfig(kind=kind))
            for kind in (StrategyKind.XPAL, StrategyKind.RAND, StrategyKind.US)
        }
        ok = means["xpal"] < means["rand"] and means["xpal"] < means["us"]
        _report("4 (iris orderings)", ok, f"{ {k: round(v, 4) for k, v in means.items()} }")
        assert ok, means


class TestCriterion5PriorRobustness:
    @pytest.mark.parametrize("name", ["iris", "seeds"])
    def test_prior_sweep_is_flat(self, name):
        dataset = _benchmark_dataset(name)
        means = {
            a: _mean_aulc(
                dataset, StrategyConfig(kind=StrategyKind.XPAL, alpha=a), reps=PRIOR_REPS
            )
            for a in PRIOR_GRID
        }
        spread = max(means.values()) - min(means.values())
        ok = spread <= PRIOR_TOLERANCE
        _report(
            f"5 ({name})",
            ok,
            f"AULC spread {spread:.4f} over alpha {PRIOR_GRID} "
            f"({ {f'{a:g}': round(v, 4) for a, v in means.items()} })",
        )
        assert ok, means


class TestCriterion6Wilcoxon:
    def test_exact_enumeration_and_branch_agreement(self, rng):
        res = wilcoxon_signed_rank([2.0, 3.0, 4.0, 5.0, 6.0], [1.0, 1.5, 2.0, 2.5, 3.0])
        exact_ok = res.statistic == 0.0 and abs(res.pvalue - 0.0625) < 1e-15

        from scipy.stats import rankdata

        worst_gap = 0.0
        for _ in range(30):
            a = rng.normal(size=20)
            b = a - rng.normal(size=20)
            exact = wilcoxon_signed_rank(a, b).pvalue
            d = (a - b)[(a - b) != 0]
            ranks = rankdata(np.abs(d))
            w_low = min(ranks[d > 0].sum(), ranks[d < 0].sum())
            worst_gap = max(worst_gap, abs(exact - _approx_signed_rank_p(ranks, d, w_low)))
        ok = exact_ok and worst_gap < 0.01
        _report("6", ok, f"n=5 enumerated p {res.pvalue}, max exact-vs-approx gap {worst_gap:.4f}")
        assert ok, (res, worst_gap)


class TestCriterion7StatisticalInvariants:
    def test_posterior_normalization(self, rng):
        worst = 0.0
        for _ in range(200):
            c = int(rng.integers(2, 7))
            freq = rng.uniform(0, 10, size=(5, c))
            alpha = symmetric_prior(float(rng.uniform(1e-4, 2.0)), c)
            worst = max(worst, float(np.abs(posterior_predictive(freq, alpha).sum(axis=1) - 1).max()))
        ok = worst <= 1e-12
        _report("7 (posteriors)", ok, f"max |sum - 1| = {worst:.2e}")
        assert ok

    def test_curve_errors_bounded_and_ranks_average(self):
        ds = synthetic_blobs(40, 3, seed=2)
        table = {}
        for kind in (StrategyKind.XPAL, StrategyKind.RAND, StrategyKind.US):
            areas = []
            for rep in range(6):
                rec = run_experiment(ds, StrategyConfig(kind=kind), SplitSpec(seed=3, repetition=rep), 8)
                assert all(0.0 <= e <= 1.0 for e in rec.errors)
                areas.append(aulc(rec))
            table[kind.value] = areas
        ranks = mean_ranks(table)
        ok = abs(sum(ranks.values()) / len(ranks) - (len(ranks) + 1) / 2) <= 1e-12
        _report("7 (bounds+ranks)", ok, f"mean ranks {ranks}")
        assert ok, ranks

    def test_worker_count_determinism(self, tmp_path):
        csv_path = tmp_path / "blobs.csv"
        write_csv(synthetic_blobs(30, 2, seed=4), csv_path)
        outs = []
        for workers in (1, 3):
            out = tmp_path / f"w{workers}.jsonl"
            code = main(
                ["run", "--datasets", str(csv_path), "--strategies", "xpal,rand",
                 "--reps", "3", "--budget", "4", "--workers", str(workers), "--out", str(out)]
            )
            assert code == 0
            outs.append(out.read_bytes())
        ok = outs[0] == outs[1]
        _report("7 (determinism)", ok, f"{len(outs[0])} bytes, workers 1 vs 3 identical: {ok}")
        assert ok


class TestCriterion8ScalingTrend:
    def test_per_acquisition_time_trends(self):
        sizes = (500, 1000, 1500)
        datasets = {n: synthetic_blobs(n, 2, seed=0) for n in sizes}
        _time_strategy(datasets[500], StrategyConfig(kind=StrategyKind.US), budget=2, seed=0)  # warm-up
        times = {}
        for kind in (StrategyKind.XPAL, StrategyKind.EER, StrategyKind.US):
            times[kind.value] = [
                _time_strategy(datasets[n], StrategyConfig(kind=kind), budget=8, seed=0)
                for n in sizes
            ]
        monotone = all(a < b for a, b in zip(times["xpal"], times["xpal"][1:])) and all(
            a < b for a, b in zip(times["eer"], times["eer"][1:])
        )
        us_flat = max(times["us"]) <= 10.0 * times["us"][0]
        ok = monotone and us_flat
        detail = {k: [f"{t * 1e3:.2f}ms" for t in v] for k, v in times.items()}
        _report("8 (timing)", ok, str(detail))
        assert ok, times

    def test_fast_path_saves_loss_evaluations(self):
        ds = synthetic_blobs(300, 2, seed=1)
        with instrument_fast_path() as stats:
            run_experiment(ds, StrategyConfig(kind=StrategyKind.XPAL), SplitSpec(seed=5), budget=20)
        per_candidate = stats.loss_evaluations / stats.candidates_scored
        ok = per_candidate < stats.eval_set_size
        _report(
            "8 (fast path)",
            ok,
            f"{per_candidate:.1f} loss evaluations per candidate vs |E| = {stats.eval_set_size}",
        )
        assert ok, (per_candidate, stats.eval_set_size)
