"""Multi-view aggregated graph-based two-sample test.

Build per-view weighted similarity graphs on the pooled sample, aggregate
the within-group weight sums of all views into a Mahalanobis-type
statistic with exact permutation-null moments, and read off an asymptotic
chi-squared (or Monte Carlo permutation) p-value.

Quick start::

    import numpy as np
    from mates import SampleMatrix, mates_test

    x = np.random.default_rng(0).standard_normal((50, 200))
    y = np.random.default_rng(1).standard_t(5, (50, 200))
    result = mates_test(SampleMatrix(np.vstack([x, y]), m=50, n=50))
    print(result.t_stat, result.p_asymptotic)
"""

from .core import (
    PermutationMoments,
    StatisticValue,
    ViewIndependenceReport,
    ViewSums,
    independence_report,
    permutation_moments,
    statistic,
    view_sums,
)
from .dissim import (
    DissimilarityMatrix,
    SampleMatrix,
    lp_distance,
    moment_manhattan,
    precomputed,
)
from .errors import DataError, DegenerateStatisticError, MatesError, PowerOverflowError
from .graphs import (
    GraphSpec,
    ViewSpec,
    WeightedView,
    attach_weights,
    build_kmst,
    build_knn,
    build_view,
    build_views,
    default_view_specs,
    median_bandwidth,
    resolve_k,
)
from .inference import (
    ConditionReport,
    MatesResult,
    condition_diagnostics,
    mates_test,
    p_value_chi2,
    p_value_permutation,
    scatter_data,
)
from .simbench import (
    ExperimentResult,
    ScenarioSpec,
    catalog_entries,
    generate,
    make_scenario,
    run_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "ConditionReport",
    "DataError",
    "DegenerateStatisticError",
    "DissimilarityMatrix",
    "ExperimentResult",
    "GraphSpec",
    "MatesError",
    "MatesResult",
    "PermutationMoments",
    "PowerOverflowError",
    "SampleMatrix",
    "ScenarioSpec",
    "StatisticValue",
    "ViewIndependenceReport",
    "ViewSpec",
    "ViewSums",
    "WeightedView",
    "attach_weights",
    "build_kmst",
    "build_knn",
    "build_view",
    "build_views",
    "catalog_entries",
    "condition_diagnostics",
    "default_view_specs",
    "generate",
    "independence_report",
    "lp_distance",
    "make_scenario",
    "mates_test",
    "median_bandwidth",
    "moment_manhattan",
    "p_value_chi2",
    "p_value_permutation",
    "permutation_moments",
    "precomputed",
    "resolve_k",
    "run_experiment",
    "scatter_data",
    "statistic",
    "view_sums",
]
