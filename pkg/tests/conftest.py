import numpy as np
import pytest

from al_lab.data import Dataset, FeatureKind
from al_lab.kernels import KernelKind, KernelMatrix, KernelSpec, build_kernel_matrix
from al_lab.model import PoolState


def identity_kernel(n: int) -> KernelMatrix:
    """Kernel where every instance is similar only to itself."""
    return KernelMatrix(values=np.eye(n), spec=KernelSpec(kind=KernelKind.RBF, gamma=1.0))


def make_dataset(rng, n, n_classes, d=2, ensure_coverage=True) -> Dataset:
    labels = rng.integers(0, n_classes, size=n)
    if ensure_coverage:
        labels[:n_classes] = np.arange(n_classes)
        rng.shuffle(labels)
    return Dataset(
        features=rng.normal(size=(n, d)),
        labels=labels.astype(np.intp),
        feature_kind=FeatureKind.NUMERIC,
        name="toy",
        n_classes=n_classes,
    )


def random_pool(rng, max_n=12, max_classes=3, n_labeled=None):
    """Random dataset + kernel + pool state with some labels revealed."""
    n = int(rng.integers(2, max_n + 1))
    n_classes = int(rng.integers(2, max_classes + 1))
    dataset = make_dataset(rng, n, n_classes, ensure_coverage=False)
    kernel = build_kernel_matrix(
        dataset, KernelSpec(kind=KernelKind.RBF, gamma=float(rng.uniform(0.2, 2.0)))
    )
    state = PoolState.initial(n, n_classes)
    if n_labeled is None:
        n_labeled = int(rng.integers(0, n))
    n_labeled = min(n_labeled, n - 1)  # keep at least one open candidate
    for idx in rng.choice(n, size=n_labeled, replace=False):
        state = state.with_label(int(idx), int(rng.integers(0, n_classes)))
    return dataset, kernel, state


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)
