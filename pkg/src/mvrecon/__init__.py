"""Multivariate minimum-trace reconciliation for hierarchical time series."""

__version__ = "0.1.0"

from .hierarchy import (  # noqa: E402
    Hierarchy,
    MultiPanel,
    NodeTree,
    aggregate_bottom,
    build_hierarchy,
    constraint_matrices,
    example_tree,
    kron_extend,
    load_hierarchy,
)
from .covariance import (  # noqa: E402
    CovarianceEstimate,
    ResidualPanel,
    estimate_covariance,
    sample_covariance,
    shrinkage_covariance,
)
from .reconcile import (  # noqa: E402
    BaseForecastSet,
    MinTReconciler,
    ReconciledForecastSet,
    reconcile,
    reconcile_direct,
    reconcile_projection_J,
    reconcile_projection_M,
    reconcile_univariate,
)
from .baseforecast import (  # noqa: E402
    ARXForecaster,
    ForecasterSpec,
    SeasonalMeanForecaster,
    VAR1Forecaster,
    fit_forecast,
)

__all__ = [
    "Hierarchy", "MultiPanel", "NodeTree", "aggregate_bottom", "build_hierarchy",
    "constraint_matrices", "example_tree", "kron_extend", "load_hierarchy",
    "CovarianceEstimate", "ResidualPanel", "estimate_covariance", "sample_covariance",
    "shrinkage_covariance", "BaseForecastSet", "MinTReconciler", "ReconciledForecastSet",
    "reconcile", "reconcile_direct", "reconcile_projection_J", "reconcile_projection_M",
    "reconcile_univariate", "ARXForecaster", "ForecasterSpec", "SeasonalMeanForecaster",
    "VAR1Forecaster", "fit_forecast",
]
