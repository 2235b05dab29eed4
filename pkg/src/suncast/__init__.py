"""Day-ahead photovoltaic power forecasting toolkit."""

__version__ = "0.1.0"

from .solarpos import GeoCoordinate, SolarPosition, julian_time, reference_coordinate, solar_position
from .geocluster import (
    SpatialGrid,
    GridSelection,
    average_selection,
    haversine_distance,
    kmeans_haversine,
)
from .dataset import (
    CapacityCurve,
    FeatureMatrix,
    FeatureName,
    FeatureSetSpec,
    ObservationTable,
    assemble_features,
    attach_load_factor,
    denormalize_forecast,
    exclude_outlier_days,
    filter_hours,
    interpolate_capacity,
    make_load_factor,
)
from .cart import CartParams, TreeModel, fit_tree, prune
from .ensemble import (
    BoostParams,
    EnsembleModel,
    ForestParams,
    fit_boosted,
    fit_forest,
    fit_linear,
)
from .harness import (
    HyperCandidate,
    ModelConfiguration,
    ModelingData,
    ParamRange,
    WindowParams,
    WindowPlan,
    backtest,
    latin_hypercube,
    plan_windows,
    tune,
)
from .metrics import AggregateMetrics, McsResult, aggregate_metrics, model_confidence_set
from .shapexplain import ShapMatrix, ShapReport, aggregate_views, monthly_schedule, tree_shap
