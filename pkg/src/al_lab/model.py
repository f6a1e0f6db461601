"""Kernel frequency estimates, the window classifier, and smoothed risk.

The classifier predicts the class with the largest similarity-weighted
label count around a point.  Class probabilities come from smoothing those
counts with a symmetric Dirichlet prior: ``(counts + alpha)`` normalized to
sum 1.  The risk of a classifier over an evaluation set is the mean, over
its points, of the smoothed probability mass the classifier's decision
misses.

``risk_difference`` compares the classifier before and after one
hypothetical label acquisition.  Because one acquisition only adds mass to
a single class, the decision can change only where the new decision becomes
that class; the loss difference vanishes everywhere else, so the sum runs
over decision-changing points only while remaining exactly equal to the
full definition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .kernels import KernelMatrix

__all__ = [
    "PoolState",
    "FrequencyTable",
    "symmetric_prior",
    "kernel_frequency",
    "predict",
    "posterior_predictive",
    "smoothed_empirical_risk",
    "risk_difference",
]


@dataclass(frozen=True)
class PoolState:
    """Partition of training-pool indices into labeled pairs and candidates.

    The labeled pairs and the candidate set always cover the whole pool;
    their union is the evaluation set used for risk estimates.  Instances
    are immutable; a hypothetical acquisition produces a new state sharing
    the old labeled prefix.
    """

    labeled: tuple[tuple[int, int], ...]
    candidates: frozenset[int]
    n_classes: int

    @classmethod
    def initial(cls, n_pool: int, n_classes: int) -> "PoolState":
        if n_pool < 1:
            raise InputError("pool must be nonempty")
        if n_classes < 2:
            raise InputError("need at least 2 classes")
        return cls(labeled=(), candidates=frozenset(range(n_pool)), n_classes=n_classes)

    @property
    def n_pool(self) -> int:
        return len(self.labeled) + len(self.candidates)

    @property
    def labeled_indices(self) -> np.ndarray:
        return np.array([i for i, _ in self.labeled], dtype=np.intp)

    @property
    def labeled_classes(self) -> np.ndarray:
        return np.array([y for _, y in self.labeled], dtype=np.intp)

    def with_label(self, index: int, label: int) -> "PoolState":
        """New state with ``index`` moved from the candidates to the labeled set."""
        if index not in self.candidates:
            raise InputError(f"index {index} is not an open candidate")
        if not 0 <= label < self.n_classes:
            raise InputError(f"label {label} outside [0, {self.n_classes})")
        return PoolState(
            labeled=self.labeled + ((index, label),),
            candidates=self.candidates - {index},
            n_classes=self.n_classes,
        )

    def candidate_array(self) -> np.ndarray:
        return np.array(sorted(self.candidates), dtype=np.intp)


def symmetric_prior(value: float, n_classes: int) -> np.ndarray:
    """Symmetric Dirichlet parameter vector; no class is favoured."""
    if not value > 0:
        raise InputError(f"prior value must be strictly positive, got {value}")
    return np.full(n_classes, float(value))


class FrequencyTable:
    """Incrementally maintained per-class kernel frequencies.

    Rows are evaluation points, columns classes.  ``weights`` holds the
    kernel values between every evaluation point (row) and every pool
    instance (column); committing a label adds one kernel column to one
    class, so each acquisition costs one vector addition instead of a full
    recount.
    """

    def __init__(self, weights: np.ndarray, n_classes: int):
        self.weights = weights
        self.counts = np.zeros((weights.shape[0], n_classes))

    def add(self, pool_index: int, label: int) -> None:
        self.counts[:, label] += self.weights[:, pool_index]

    def copy(self) -> "FrequencyTable":
        clone = FrequencyTable.__new__(FrequencyTable)
        clone.weights = self.weights
        clone.counts = self.counts.copy()
        return clone


def _frequency_matrix(state: PoolState, weights: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Kernel frequencies for ``rows`` of a weight matrix, recomputed from scratch."""
    counts = np.zeros((rows.shape[0], state.n_classes))
    if state.labeled:
        idx = state.labeled_indices
        w = weights[np.ix_(rows, idx)]
        for cls in range(state.n_classes):
            mask = state.labeled_classes == cls
            if mask.any():
                counts[:, cls] = w[:, mask].sum(axis=1)
    return counts


def kernel_frequency(state: PoolState, kernel: KernelMatrix, x_index: int) -> np.ndarray:
    """Similarity-weighted label counts at one pool instance.

    Entry ``y`` sums the kernel values between ``x_index`` and every
    labeled instance carrying class ``y``.
    """
    if not 0 <= x_index < kernel.n:
        raise InputError(f"index {x_index} outside pool of size {kernel.n}")
    rows = np.array([x_index], dtype=np.intp)
    return _frequency_matrix(state, kernel.values, rows)[0]


def predict(freq: np.ndarray) -> int:
    """Most frequent class; ties resolve to the lowest class index."""
    return int(np.argmax(freq))


def posterior_predictive(freq: np.ndarray, prior: np.ndarray) -> np.ndarray:
    """Dirichlet-smoothed class probabilities ``(freq + prior) / sum``.

    Accepts a single frequency vector or a matrix of row vectors.  A row
    whose smoothed total is zero (possible only with an all-zero prior on
    an unlabeled region) falls back to the uniform distribution.
    """
    freq = np.asarray(freq, dtype=np.float64)
    prior = np.asarray(prior, dtype=np.float64)
    if np.any(freq < 0):
        raise InputError("frequencies must be non-negative")
    if np.any(prior < 0):
        raise InputError("prior entries must be non-negative")
    smoothed = freq + prior
    total = smoothed.sum(axis=-1, keepdims=True)
    n_classes = smoothed.shape[-1]
    uniform = np.full_like(smoothed, 1.0 / n_classes)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(total > 0, smoothed / np.where(total > 0, total, 1.0), uniform)
    return out


def smoothed_empirical_risk(
    state_for_probs: PoolState,
    classifier_state: PoolState,
    kernel: KernelMatrix,
    prior: np.ndarray,
    eval_indices: np.ndarray,
) -> float:
    """Mean zero-one loss over ``eval_indices`` under smoothed probabilities.

    Class probabilities at each point come from ``state_for_probs``; the
    deciding classifier is trained on ``classifier_state``.  The two states
    may differ (the risk difference evaluates old and new classifiers under
    the same updated probabilities).
    """
    rows = np.asarray(eval_indices, dtype=np.intp)
    if rows.size == 0:
        raise InputError("evaluation set must be nonempty")
    probs = posterior_predictive(_frequency_matrix(state_for_probs, kernel.values, rows), prior)
    decisions = np.argmax(_frequency_matrix(classifier_state, kernel.values, rows), axis=1)
    losses = decisions[:, None] != np.arange(state_for_probs.n_classes)[None, :]
    return float((probs * losses).sum(axis=1).mean())


def decision_flips(
    counts: np.ndarray,
    cur_arg: np.ndarray,
    cur_max: np.ndarray,
    added: np.ndarray,
    new_class: int,
) -> np.ndarray:
    """Rows whose argmax moves to ``new_class`` after adding ``added`` mass to it.

    Mirrors lowest-index argmax semantics exactly: a tie created by the
    added mass wins only when ``new_class`` precedes the current decision.
    """
    new_val = counts[:, new_class] + added
    return (cur_arg != new_class) & (
        (new_val > cur_max) | ((new_val == cur_max) & (new_class < cur_arg))
    )


def risk_difference(
    state_plus: PoolState,
    state: PoolState,
    kernel: KernelMatrix,
    prior: np.ndarray,
    eval_indices: np.ndarray,
) -> float:
    """Risk of the new classifier minus risk of the old one, both measured
    under the updated smoothed probabilities.

    ``state_plus`` must extend ``state`` by exactly one labeled pair.
    Computed over decision-changing points only; equals the full sum
    exactly because the loss difference is zero wherever the decision is
    unchanged.
    """
    extra = set(state_plus.labeled) - set(state.labeled)
    if (
        len(extra) != 1
        or len(state_plus.labeled) != len(state.labeled) + 1
        or not set(state.labeled) <= set(state_plus.labeled)
    ):
        raise InputError("state_plus must extend state by exactly one labeled pair")
    (cand, y_new), = extra

    rows = np.asarray(eval_indices, dtype=np.intp)
    if rows.size == 0:
        raise InputError("evaluation set must be nonempty")
    prior = np.asarray(prior, dtype=np.float64)

    counts = _frequency_matrix(state, kernel.values, rows)
    cur_arg = np.argmax(counts, axis=1)
    cur_max = counts[np.arange(rows.size), cur_arg]
    added = kernel.values[rows, cand]

    flips = decision_flips(counts, cur_arg, cur_max, added, y_new)
    if not flips.any():
        return 0.0

    # posterior under the extended state, evaluated only where needed
    old_mass = cur_max[flips] + prior[cur_arg[flips]]
    new_mass = counts[flips, y_new] + added[flips] + prior[y_new]
    denom = counts[flips].sum(axis=1) + added[flips] + prior.sum()
    return float(((old_mass - new_mass) / denom).sum() / rows.size)
