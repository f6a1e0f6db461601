"""Kernel functions, bandwidth selection, and kernel-matrix construction.

Three kernels are supported, one per feature kind: a radial basis function
kernel for numeric data, an exponentiated mismatch-count kernel for
categorical data, and cosine similarity for TF-IDF data.  The RBF/Hamming
bandwidth coefficient ``gamma`` comes from a closed-form mean-bandwidth
heuristic driven only by pool size and dimensionality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConfigError, InputError

if TYPE_CHECKING:
    from .data import Dataset

# Precision parameter of the mean-bandwidth criterion.
_BANDWIDTH_DELTA = math.sqrt(2.0) * 1e-6
# Pool size is capped before entering the bandwidth formula.
_BANDWIDTH_POOL_CAP = 200

_CHUNK_ROWS = 256


class KernelKind(str, Enum):
    RBF = "rbf"
    HAMMING = "hamming"
    COSINE = "cosine"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice plus its bandwidth coefficient (unused for cosine)."""

    kind: KernelKind
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind in (KernelKind.RBF, KernelKind.HAMMING) and not self.gamma > 0:
            raise InputError(f"gamma must be positive for {self.kind.value} kernel, got {self.gamma}")


@dataclass(frozen=True)
class KernelMatrix:
    """Precomputed symmetric pairwise similarities over a training pool.

    Immutable after construction; safe to share read-only across
    concurrently evaluated strategies.
    """

    values: np.ndarray
    spec: KernelSpec

    @property
    def n(self) -> int:
        return self.values.shape[0]


def rbf_kernel(a, b, gamma: float) -> float:
    """exp(-gamma * squared Euclidean distance) between two numeric vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not gamma > 0:
        raise InputError(f"gamma must be positive, got {gamma}")
    diff = a - b
    return float(np.exp(-gamma * np.dot(diff, diff)))


def hamming_kernel(a, b, gamma: float) -> float:
    """exp(-gamma * number of positions where the categorical codes differ).

    Mismatches are counted, so identical vectors score 1 and similarity
    decays as vectors disagree in more positions.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if not gamma > 0:
        raise InputError(f"gamma must be positive, got {gamma}")
    return float(np.exp(-gamma * np.count_nonzero(a != b)))


def cosine_kernel(a, b) -> float:
    """Cosine similarity; a zero-norm input yields 0 (no shared direction)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def mean_bandwidth(n_pool: int, dims: int) -> float:
    """Bandwidth coefficient gamma = 1/(2 s^2) from the mean criterion.

    s^2 = 2*N*D / ((N-1) * ln((N-1)/delta^2)) with unit per-dimension
    variance, delta = sqrt(2)*1e-6, and N capped at 200.
    """
    if n_pool < 2:
        raise InputError(f"mean bandwidth needs a pool of at least 2, got {n_pool}")
    if dims < 1:
        raise InputError(f"dims must be positive, got {dims}")
    n = min(int(n_pool), _BANDWIDTH_POOL_CAP)
    s_sq = (2.0 * n * dims) / ((n - 1) * math.log((n - 1) / _BANDWIDTH_DELTA**2))
    return 1.0 / (2.0 * s_sq)


def _rbf_cross(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    out = np.empty((a.shape[0], b.shape[0]))
    for lo in range(0, a.shape[0], _CHUNK_ROWS):
        hi = min(lo + _CHUNK_ROWS, a.shape[0])
        # broadcasted (a-b)**2 keeps (i,j)/(j,i) bitwise symmetric, unlike
        # the a^2 + b^2 - 2ab expansion
        d2 = ((a[lo:hi, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        out[lo:hi] = np.exp(-gamma * d2)
    return out


def _hamming_cross(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    out = np.empty((a.shape[0], b.shape[0]))
    for lo in range(0, a.shape[0], _CHUNK_ROWS):
        hi = min(lo + _CHUNK_ROWS, a.shape[0])
        mism = (a[lo:hi, None, :] != b[None, :, :]).sum(axis=2)
        out[lo:hi] = np.exp(-gamma * mism)
    return out


def _cosine_cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    def unit_rows(x):
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        safe = np.where(norms == 0.0, 1.0, norms)
        return x / safe  # zero rows stay zero -> similarity 0

    return unit_rows(a) @ unit_rows(b).T


def kernel_cross(a, b, spec: KernelSpec) -> np.ndarray:
    """Pairwise kernel values between the rows of ``a`` and the rows of ``b``."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise InputError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if spec.kind is KernelKind.RBF:
        return _rbf_cross(a, b, spec.gamma)
    if spec.kind is KernelKind.HAMMING:
        return _hamming_cross(a, b, spec.gamma)
    return _cosine_cross(a, b)


_COMPATIBLE = {
    KernelKind.RBF: "numeric",
    KernelKind.HAMMING: "categorical",
    KernelKind.COSINE: "tfidf",
}


def default_kernel_spec(dataset: "Dataset") -> KernelSpec:
    """Kernel choice implied by the dataset's feature kind, with the
    mean-bandwidth gamma computed from its pool size and dimensionality."""
    kind = {v: k for k, v in _COMPATIBLE.items()}[dataset.feature_kind.value]
    if kind is KernelKind.COSINE:
        return KernelSpec(kind=kind)
    return KernelSpec(kind=kind, gamma=mean_bandwidth(dataset.n, dataset.d))


def build_kernel_matrix(dataset: "Dataset", spec: KernelSpec) -> KernelMatrix:
    """N x N symmetric kernel matrix over the dataset's rows.

    Computed once per split and shared read-only by every strategy.
    """
    if dataset.n < 1:
        raise InputError("cannot build a kernel matrix over an empty dataset")
    if _COMPATIBLE[spec.kind] != dataset.feature_kind.value:
        raise ConfigError(
            f"{spec.kind.value} kernel is incompatible with "
            f"{dataset.feature_kind.value} features ({dataset.name})"
        )
    values = kernel_cross(dataset.features, dataset.features, spec)
    # mirror the upper triangle so symmetry holds exactly by construction
    iu, ju = np.triu_indices(values.shape[0], k=1)
    values[ju, iu] = values[iu, ju]
    if spec.kind is KernelKind.COSINE:
        nonzero = np.linalg.norm(dataset.features, axis=1) > 0
        values[np.diag_indices_from(values)] = np.where(nonzero, 1.0, values.diagonal())
    return KernelMatrix(values=values, spec=spec)
