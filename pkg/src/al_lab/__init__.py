"""Kernel-based pool active learning with a decision-theoretic gain criterion.

A similarity-weighted frequency classifier over a fixed pool, a family of
label-selection strategies (expected probabilistic gain with a Dirichlet
prior, expected error reduction, probabilistic AL, uncertainty sampling,
query by committee, an omniscient greedy baseline, and random), and a
benchmark harness producing learning curves, areas, ranks, and signed-rank
significance summaries.
"""

from .data import Dataset, FeatureKind, SplitSpec, load_csv, split, synthetic_blobs, z_standardize
from .errors import ConfigError, IngestionError, InputError, SplitError
from .harness import (
    LearningCurveRecord,
    RankSummary,
    WilcoxonResult,
    aulc,
    landscape,
    mean_ranks,
    rank_summary,
    run_experiment,
    significance_stars,
    summarize,
    wilcoxon_signed_rank,
)
from .kernels import (
    KernelKind,
    KernelMatrix,
    KernelSpec,
    build_kernel_matrix,
    cosine_kernel,
    hamming_kernel,
    kernel_cross,
    mean_bandwidth,
    rbf_kernel,
)
from .model import (
    FrequencyTable,
    PoolState,
    kernel_frequency,
    posterior_predictive,
    predict,
    risk_difference,
    smoothed_empirical_risk,
    symmetric_prior,
)
from .strategies import (
    ScoredCandidate,
    StrategyConfig,
    StrategyKind,
    eer_score,
    greedy_all_score,
    instrument_fast_path,
    pal_density,
    pal_score,
    qbc_score,
    score_candidates,
    score_hypothetical,
    select,
    us_score,
    xgain,
)

__version__ = "0.1.0"
