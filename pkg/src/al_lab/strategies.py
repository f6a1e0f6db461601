"""Candidate-selection strategies behind one interface.

Every strategy scores all open candidates (higher = more useful) and
``select`` returns the argmax, breaking ties uniformly at random with the
caller's seeded generator.  Error-minimizing criteria are negated so a
single argmax code path serves everything.

Strategies:

* ``xpal``  - expected reduction in smoothed risk over the whole pool,
  marginalized over the candidate's simulated labels under a Dirichlet
  prior.
* ``eer``   - expected post-acquisition error over the unlabeled pool.
* ``pal``   - density-weighted expected local gain at the candidate
  (add-one smoothing).
* ``us``    - least-confidence uncertainty: one minus the maximum
  unsmoothed class probability.
* ``qbc``   - mean KL disagreement between bootstrap committee members and
  their consensus.
* ``greedy-all`` - omniscient baseline minimizing the true pool error.
* ``rand``  - uniform random scores.

The per-candidate functions follow the definitions directly and are the
reference implementations; the module also provides batched paths used by
the experiment loop, which must agree with them (covered by tests).
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConfigError, InputError
from .kernels import KernelKind, KernelMatrix, KernelSpec, kernel_cross, mean_bandwidth
from .model import (
    FrequencyTable,
    PoolState,
    decision_flips,
    kernel_frequency,
    posterior_predictive,
    predict,
    risk_difference,
    symmetric_prior,
    _frequency_matrix,
)

if TYPE_CHECKING:
    from .data import Dataset

_CAND_CHUNK = 512


class StrategyKind(str, Enum):
    XPAL = "xpal"
    PAL = "pal"
    EER = "eer"
    US = "us"
    QBC = "qbc"
    RAND = "rand"
    GREEDY_ALL = "greedy-all"


_DEFAULT_ALPHA = 1e-3


@dataclass(frozen=True)
class StrategyConfig:
    """A strategy plus its parameters.

    ``alpha`` is the symmetric Dirichlet prior scalar for ``xpal`` and the
    smoothing prior for ``eer``; it is ignored elsewhere.
    """

    kind: StrategyKind
    alpha: float = _DEFAULT_ALPHA
    committee_size: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.kind in (StrategyKind.XPAL, StrategyKind.EER) and not self.alpha > 0:
            raise ConfigError(f"{self.kind.value} needs a strictly positive prior, got {self.alpha}")
        if self.kind is StrategyKind.QBC and self.committee_size < 2:
            raise ConfigError(f"qbc needs a committee of at least 2, got {self.committee_size}")

    @property
    def label(self) -> str:
        """Display name; carries non-default parameters so runs stay distinguishable."""
        parts = []
        if self.kind in (StrategyKind.XPAL, StrategyKind.EER) and self.alpha != _DEFAULT_ALPHA:
            parts.append(f"alpha={self.alpha:g}")
        if self.kind is StrategyKind.QBC and self.committee_size != 25:
            parts.append(f"m={self.committee_size}")
        return self.kind.value + (f"({','.join(parts)})" if parts else "")


@dataclass(frozen=True)
class ScoredCandidate:
    index: int
    score: float


@dataclass
class FastPathStats:
    """Counters for the decision-change shortcut in expected-gain scoring."""

    loss_evaluations: int = 0
    candidates_scored: int = 0
    eval_set_size: int = 0


_active_stats: FastPathStats | None = None


@contextmanager
def instrument_fast_path():
    """Collect fast-path counters for expected-gain scoring within the block."""
    global _active_stats
    stats = FastPathStats()
    prev, _active_stats = _active_stats, stats
    try:
        yield stats
    finally:
        _active_stats = prev


# ---------------------------------------------------------------------------
# per-candidate scorers (reference definitions)
# ---------------------------------------------------------------------------


def xgain(
    candidate: int,
    state: PoolState,
    kernel: KernelMatrix,
    alpha: np.ndarray,
    eval_indices: np.ndarray,
) -> float:
    """Expected gain in smoothed risk from acquiring the candidate's label.

    Marginalizes the (negated) risk difference over the candidate's
    simulated labels, weighted by its current smoothed class probabilities.
    """
    if candidate not in state.candidates:
        raise InputError(f"index {candidate} is not an open candidate")
    p_label = posterior_predictive(kernel_frequency(state, kernel, candidate), alpha)
    total = 0.0
    for y_sim in range(state.n_classes):
        plus = state.with_label(candidate, y_sim)
        total += p_label[y_sim] * risk_difference(plus, state, kernel, alpha, eval_indices)
    return -total


def eer_score(
    candidate: int,
    state: PoolState,
    kernel: KernelMatrix,
    epsilon: np.ndarray,
) -> float:
    """Negated expected error over the unlabeled pool after the acquisition."""
    if candidate not in state.candidates:
        raise InputError(f"index {candidate} is not an open candidate")
    unlabeled = state.candidate_array()
    if unlabeled.size == 0:
        raise InputError("expected error needs a nonempty unlabeled pool")
    p_label = posterior_predictive(kernel_frequency(state, kernel, candidate), epsilon)
    expected_error = 0.0
    for y_sim in range(state.n_classes):
        plus = state.with_label(candidate, y_sim)
        counts_plus = _frequency_matrix(plus, kernel.values, unlabeled)
        decisions = np.argmax(counts_plus, axis=1)
        post = posterior_predictive(counts_plus, epsilon)
        losses = decisions[:, None] != np.arange(state.n_classes)[None, :]
        expected_error += p_label[y_sim] * float((post * losses).sum(axis=1).mean())
    return -expected_error


def pal_density(candidate: int, kernel: KernelMatrix, eval_indices: np.ndarray) -> float:
    """Parzen density weight: mean kernel value from the candidate to the pool."""
    rows = np.asarray(eval_indices, dtype=np.intp)
    if rows.size == 0:
        raise InputError("evaluation set must be nonempty")
    return float(kernel.values[candidate, rows].mean())


def pal_score(
    candidate: int,
    state: PoolState,
    kernel: KernelMatrix,
    density: float,
) -> float:
    """Density-weighted expected local gain at the candidate (add-one prior)."""
    if density < 0:
        raise InputError(f"density must be non-negative, got {density}")
    n_classes = state.n_classes
    ones = np.ones(n_classes)
    k = kernel_frequency(state, kernel, candidate)
    self_sim = kernel.values[candidate, candidate]
    decision = predict(k)
    p_label = posterior_predictive(k, ones)
    total = 0.0
    for y_sim in range(n_classes):
        k_plus = k.copy()
        k_plus[y_sim] += self_sim
        decision_plus = predict(k_plus)
        post_plus = posterior_predictive(k_plus, ones)
        inner = sum(
            post_plus[y] * ((y != decision_plus) - (y != decision))
            for y in range(n_classes)
        )
        total += p_label[y_sim] * inner
    return -density * total


def us_score(candidate: int, state: PoolState, kernel: KernelMatrix) -> float:
    """Least-confidence uncertainty: 1 - max unsmoothed class probability."""
    k = kernel_frequency(state, kernel, candidate)
    post = posterior_predictive(k, np.zeros(state.n_classes))
    return float(1.0 - post.max())


def greedy_all_score(
    candidate: int,
    state: PoolState,
    kernel: KernelMatrix,
    true_labels: np.ndarray,
    eval_indices: np.ndarray,
) -> float:
    """Negated true pool error after acquiring the candidate's actual label."""
    if true_labels is None or len(true_labels) < state.n_pool:
        raise ConfigError("greedy-all needs true labels for the full pool")
    rows = np.asarray(eval_indices, dtype=np.intp)
    plus = state.with_label(candidate, int(true_labels[candidate]))
    decisions = np.argmax(_frequency_matrix(plus, kernel.values, rows), axis=1)
    return -float((decisions != true_labels[rows]).mean())


def qbc_score(
    candidate: int,
    state: PoolState,
    kernel: KernelMatrix,
    dataset: "Dataset",
    committee_size: int,
    rng: np.random.Generator,
) -> float:
    """Mean KL divergence of committee posteriors from their consensus."""
    if not state.labeled:
        return 0.0
    members = _draw_committee(state, dataset, kernel.spec, committee_size, rng)
    posts = _committee_posteriors(
        members, dataset.features[np.array([candidate])], state.n_classes
    )
    return float(_kl_disagreement(posts)[0])


# ---------------------------------------------------------------------------
# batched scoring (used by the experiment loop)
# ---------------------------------------------------------------------------


def _pool_counts(state: PoolState, kernel: KernelMatrix, freq: FrequencyTable | None) -> np.ndarray:
    if freq is not None:
        return freq.counts
    return _frequency_matrix(state, kernel.values, np.arange(kernel.n, dtype=np.intp))


def _xgain_all(state, kernel, alpha, counts):
    """Expected-gain scores for all candidates at once.

    Works per simulated class over (pool x candidate-chunk) blocks; the
    loss difference is evaluated only where the decision flips, which is
    what the instrumentation counts.
    """
    cands = state.candidate_array()
    k_vals = kernel.values
    n_pool = k_vals.shape[0]
    cur_arg = np.argmax(counts, axis=1)
    cur_max = counts[np.arange(n_pool), cur_arg]
    old_mass = cur_max + alpha[cur_arg]
    row_sum = counts.sum(axis=1)
    alpha_sum = alpha.sum()
    p_label = posterior_predictive(counts[cands], alpha)

    scores = np.zeros(cands.size)
    for lo in range(0, cands.size, _CAND_CHUNK):
        block = cands[lo : lo + _CAND_CHUNK]
        added = k_vals[:, block]
        for y_sim in range(state.n_classes):
            new_val = counts[:, y_sim][:, None] + added
            flips = (cur_arg != y_sim)[:, None] & (
                (new_val > cur_max[:, None])
                | ((new_val == cur_max[:, None]) & (y_sim < cur_arg)[:, None])
            )
            new_mass = new_val + alpha[y_sim]
            denom = row_sum[:, None] + added + alpha_sum
            contrib = np.where(flips, (old_mass[:, None] - new_mass) / denom, 0.0)
            delta_risk = contrib.sum(axis=0) / n_pool
            scores[lo : lo + block.size] -= p_label[lo : lo + block.size, y_sim] * delta_risk
            if _active_stats is not None:
                _active_stats.loss_evaluations += int(flips.sum())
        if _active_stats is not None:
            _active_stats.candidates_scored += block.size
            _active_stats.eval_set_size = n_pool
    return cands, scores


def _eer_all(state, kernel, epsilon, counts):
    """Batched expected error; relies on the prior being symmetric so the
    smoothed maximum coincides with the unsmoothed decision's mass."""
    cands = state.candidate_array()
    smoothed = counts[cands] + epsilon
    row_sum = smoothed.sum(axis=1)
    top_arg = np.argmax(smoothed, axis=1)
    part = np.partition(smoothed, smoothed.shape[1] - 2, axis=1)
    top1, top2 = part[:, -1], part[:, -2]
    k_uu = kernel.values[np.ix_(cands, cands)]
    p_label = posterior_predictive(counts[cands], epsilon)

    expected_error = np.zeros(cands.size)
    for y_sim in range(state.n_classes):
        max_other = np.where(top_arg == y_sim, top2, top1)
        new_mass = smoothed[:, y_sim][:, None] + k_uu
        best = np.maximum(max_other[:, None], new_mass)
        err = 1.0 - best / (row_sum[:, None] + k_uu)
        expected_error += p_label[:, y_sim] * err.mean(axis=0)
    return cands, -expected_error


def _pal_all(state, kernel, counts):
    cands = state.candidate_array()
    k = counts[cands]
    n_classes = state.n_classes
    self_sim = kernel.values[cands, cands]
    density = kernel.values[cands].mean(axis=1)
    decision = np.argmax(k, axis=1)
    dec_val = k[np.arange(cands.size), decision]
    p_label = (k + 1.0) / (k + 1.0).sum(axis=1, keepdims=True)
    denom_plus = k.sum(axis=1) + self_sim + n_classes

    total = np.zeros(cands.size)
    for y_sim in range(n_classes):
        new_val = k[:, y_sim] + self_sim
        flips = decision_flips(k, decision, dec_val, self_sim, y_sim)
        inner = np.where(flips, ((dec_val + 1.0) - (new_val + 1.0)) / denom_plus, 0.0)
        total += p_label[:, y_sim] * inner
    return cands, -density * total


def _us_all(state, counts):
    cands = state.candidate_array()
    post = posterior_predictive(counts[cands], np.zeros(state.n_classes))
    return cands, 1.0 - post.max(axis=1)


def _greedy_all_all(state, kernel, true_labels, counts):
    cands = state.candidate_array()
    k_vals = kernel.values
    n_pool = k_vals.shape[0]
    cur_arg = np.argmax(counts, axis=1)
    cur_max = counts[np.arange(n_pool), cur_arg]
    base_wrong = cur_arg != true_labels
    base_errors = int(base_wrong.sum())

    scores = np.empty(cands.size)
    cand_labels = true_labels[cands]
    for y_sim in np.unique(cand_labels):
        sel = np.flatnonzero(cand_labels == y_sim)
        added = k_vals[:, cands[sel]]
        new_val = counts[:, y_sim][:, None] + added
        flips = (cur_arg != y_sim)[:, None] & (
            (new_val > cur_max[:, None])
            | ((new_val == cur_max[:, None]) & (y_sim < cur_arg)[:, None])
        )
        change = np.where(
            flips,
            (y_sim != true_labels)[:, None].astype(float) - base_wrong[:, None],
            0.0,
        )
        scores[sel] = -(base_errors + change.sum(axis=0)) / n_pool
    return cands, scores


# ---------------------------------------------------------------------------
# committee machinery
# ---------------------------------------------------------------------------


def _member_kernel_spec(base: KernelSpec, n_pool: int, dims: int) -> KernelSpec:
    if base.kind is KernelKind.COSINE:
        return base
    return KernelSpec(kind=base.kind, gamma=mean_bandwidth(n_pool, dims))


def _draw_committee(state, dataset, kernel_spec, committee_size, rng):
    """Bootstrap resamples of the labeled set on random feature subsets.

    Each member sees ceil(sqrt(D)) features and |L| draws with replacement;
    its kernel is recomputed on that subset with a bandwidth matched to the
    reduced dimensionality.
    """
    labeled_idx = state.labeled_indices
    labeled_cls = state.labeled_classes
    n_features = dataset.d
    subset_size = math.ceil(math.sqrt(n_features))
    members = []
    for member_rng in rng.spawn(committee_size):
        feats = np.sort(member_rng.choice(n_features, size=subset_size, replace=False))
        boot = member_rng.integers(0, labeled_idx.size, size=labeled_idx.size)
        spec = _member_kernel_spec(kernel_spec, dataset.n, subset_size)
        members.append(
            (feats, dataset.features[labeled_idx[boot]][:, feats], labeled_cls[boot], spec)
        )
    return members


def _committee_posteriors(members, points, n_classes):
    """Per-member smoothed posteriors at the given feature rows: (M, n, C)."""
    posts = []
    for feats, boot_features, boot_classes, spec in members:
        weights = kernel_cross(points[:, feats], boot_features, spec)
        freq = np.zeros((points.shape[0], n_classes))
        for cls in range(n_classes):
            mask = boot_classes == cls
            if mask.any():
                freq[:, cls] = weights[:, mask].sum(axis=1)
        posts.append((freq + 1.0) / (freq + 1.0).sum(axis=1, keepdims=True))
    return np.stack(posts)


def _kl_disagreement(posts: np.ndarray) -> np.ndarray:
    consensus = posts.mean(axis=0)
    kl = (posts * np.log(posts / consensus)).sum(axis=2)
    return kl.mean(axis=0)


def _qbc_all(state, kernel, dataset, committee_size, rng):
    cands = state.candidate_array()
    if not state.labeled:
        return cands, np.zeros(cands.size)
    members = _draw_committee(state, dataset, kernel.spec, committee_size, rng)
    posts = _committee_posteriors(members, dataset.features[cands], state.n_classes)
    return cands, _kl_disagreement(posts)


# ---------------------------------------------------------------------------
# selection
# ---------------------------------------------------------------------------


def score_candidates(
    config: StrategyConfig,
    state: PoolState,
    kernel: KernelMatrix,
    dataset: "Dataset",
    rng: np.random.Generator,
    freq: FrequencyTable | None = None,
) -> list[ScoredCandidate]:
    """Score every open candidate with the configured criterion."""
    cands, scores = _score_all(config, state, kernel, dataset, rng, freq)
    return [ScoredCandidate(int(i), float(s)) for i, s in zip(cands, scores)]


def _score_all(config, state, kernel, dataset, rng, freq=None):
    if not state.candidates:
        return np.array([], dtype=np.intp), np.array([])
    counts = _pool_counts(state, kernel, freq)
    kind = config.kind
    if kind is StrategyKind.RAND:
        cands = state.candidate_array()
        return cands, rng.random(cands.size)
    if kind is StrategyKind.XPAL:
        return _xgain_all(state, kernel, symmetric_prior(config.alpha, state.n_classes), counts)
    if kind is StrategyKind.EER:
        return _eer_all(state, kernel, symmetric_prior(config.alpha, state.n_classes), counts)
    if kind is StrategyKind.PAL:
        return _pal_all(state, kernel, counts)
    if kind is StrategyKind.US:
        return _us_all(state, counts)
    if kind is StrategyKind.QBC:
        return _qbc_all(state, kernel, dataset, config.committee_size, rng)
    if kind is StrategyKind.GREEDY_ALL:
        if dataset is None:
            raise ConfigError("greedy-all needs the pool dataset for its true labels")
        return _greedy_all_all(state, kernel, dataset.labels, counts)
    raise ConfigError(f"unknown strategy kind: {kind}")


def argmax_tiebreak(scores: np.ndarray, rng: np.random.Generator) -> int:
    """Position of the maximum; exact ties are resolved uniformly at random.

    Scaling all scores by a common positive constant preserves the tie set,
    so it cannot change the chosen-index distribution.
    """
    ties = np.flatnonzero(scores == scores.max())
    return int(ties[rng.integers(ties.size)]) if ties.size > 1 else int(ties[0])


def select(
    config: StrategyConfig,
    state: PoolState,
    kernel: KernelMatrix,
    dataset: "Dataset",
    rng: np.random.Generator,
    freq: FrequencyTable | None = None,
) -> int:
    """Pick the best-scoring candidate; exact score ties break uniformly at random."""
    if not state.candidates:
        raise InputError("no candidates left to select from")
    cands, scores = _score_all(config, state, kernel, dataset, rng, freq)
    return int(cands[argmax_tiebreak(scores, rng)])


# ---------------------------------------------------------------------------
# out-of-pool scoring (usefulness landscapes)
# ---------------------------------------------------------------------------


def score_hypothetical(
    config: StrategyConfig,
    state: PoolState,
    kernel: KernelMatrix,
    dataset: "Dataset",
    point: np.ndarray,
    rng: np.random.Generator,
    freq: FrequencyTable | None = None,
) -> float:
    """Score an out-of-pool point as if it were a labeling candidate.

    The point's kernel row against the pool is computed on demand; for the
    expected-gain criterion its hypothetical acquisition adds the point
    itself to the evaluation set.  Never mutates the pool state.
    """
    point = np.asarray(point, dtype=np.float64)
    row = kernel_cross(point[None, :], dataset.features, kernel.spec)[0]
    if kernel.spec.kind is KernelKind.COSINE:
        self_sim = 1.0 if np.linalg.norm(point) > 0 else 0.0
    else:
        self_sim = 1.0
    counts = _pool_counts(state, kernel, freq)
    n_classes = state.n_classes

    point_freq = np.zeros(n_classes)
    for i, y in state.labeled:
        point_freq[y] += row[i]

    kind = config.kind
    if kind is StrategyKind.RAND:
        return float(rng.random())
    if kind is StrategyKind.US:
        return float(1.0 - posterior_predictive(point_freq, np.zeros(n_classes)).max())
    if kind is StrategyKind.PAL:
        density = float(row.mean())
        return _pal_local(point_freq, self_sim, density, n_classes)
    if kind is StrategyKind.XPAL:
        alpha = symmetric_prior(config.alpha, n_classes)
        return _xgain_hypothetical(state, kernel, alpha, counts, point_freq, row, self_sim)
    if kind is StrategyKind.EER:
        epsilon = symmetric_prior(config.alpha, n_classes)
        return _eer_hypothetical(state, kernel, epsilon, counts, point_freq, row)
    if kind is StrategyKind.QBC:
        if not state.labeled:
            return 0.0
        members = _draw_committee(state, dataset, kernel.spec, config.committee_size, rng)
        posts = _committee_posteriors(members, point[None, :], n_classes)
        return float(_kl_disagreement(posts)[0])
    raise ConfigError(f"{kind.value} cannot score out-of-pool points (needs a true label)")


def _pal_local(k, self_sim, density, n_classes):
    decision = int(np.argmax(k))
    p_label = (k + 1.0) / (k + 1.0).sum()
    denom_plus = k.sum() + self_sim + n_classes
    total = 0.0
    for y_sim in range(n_classes):
        new_val = k[y_sim] + self_sim
        if y_sim != decision and (new_val > k[decision] or (new_val == k[decision] and y_sim < decision)):
            total += p_label[y_sim] * ((k[decision] + 1.0) - (new_val + 1.0)) / denom_plus
    return float(-density * total)


def _xgain_hypothetical(state, kernel, alpha, counts, point_freq, row, self_sim):
    n_pool = kernel.n
    cur_arg = np.argmax(counts, axis=1)
    cur_max = counts[np.arange(n_pool), cur_arg]
    row_sum = counts.sum(axis=1)
    alpha_sum = alpha.sum()
    point_arg = int(np.argmax(point_freq))
    p_label = posterior_predictive(point_freq, alpha)

    score = 0.0
    for y_sim in range(state.n_classes):
        flips = decision_flips(counts, cur_arg, cur_max, row, y_sim)
        old_mass = cur_max[flips] + alpha[cur_arg[flips]]
        new_mass = counts[flips, y_sim] + row[flips] + alpha[y_sim]
        denom = row_sum[flips] + row[flips] + alpha_sum
        delta = float(((old_mass - new_mass) / denom).sum())
        # the point itself joins the evaluation set
        new_val = point_freq[y_sim] + self_sim
        if point_arg != y_sim and (
            new_val > point_freq[point_arg]
            or (new_val == point_freq[point_arg] and y_sim < point_arg)
        ):
            q_denom = point_freq.sum() + self_sim + alpha_sum
            delta += ((point_freq[point_arg] + alpha[point_arg]) - (new_val + alpha[y_sim])) / q_denom
        score -= p_label[y_sim] * delta / (n_pool + 1)
    return float(score)


def _eer_hypothetical(state, kernel, epsilon, counts, point_freq, row):
    unlabeled = state.candidate_array()
    smoothed = counts[unlabeled] + epsilon
    row_sum = smoothed.sum(axis=1)
    top_arg = np.argmax(smoothed, axis=1)
    part = np.partition(smoothed, smoothed.shape[1] - 2, axis=1)
    top1, top2 = part[:, -1], part[:, -2]
    p_label = posterior_predictive(point_freq, epsilon)

    expected_error = 0.0
    for y_sim in range(state.n_classes):
        max_other = np.where(top_arg == y_sim, top2, top1)
        new_mass = smoothed[:, y_sim] + row[unlabeled]
        best = np.maximum(max_other, new_mass)
        err = 1.0 - best / (row_sum + row[unlabeled])
        expected_error += p_label[y_sim] * err.mean()
    return float(-expected_error)
