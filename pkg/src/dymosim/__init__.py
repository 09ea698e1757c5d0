"""Budget-constrained low-tail SNR quantile estimation and an agent-based
multicast feedback-monitoring simulator."""

from .estimation import (
    FractionEstimate,
    InsufficientReports,
    IterativeState,
    QuantileQuery,
    SampleSet,
    TwoStepPlan,
    empirical_quantile,
    estimate_subpopulation_fraction,
    exp_smooth,
    iterative_bound,
    optimal_two_step_plan,
    quantile_variance,
    two_step_bound,
    two_step_error_expression,
)
from .snr import SnrHistogram, histogram_quantile, merge_smoothed, quantize
from .venue import Scenario, ScenarioTrace, VenueGrid, gen_homogeneous, gen_stadium
from .controller import (
    DymoController,
    GroupInstruction,
    McsTable,
    OrderStatisticsController,
    QosReport,
    UniformController,
    default_mcs_table,
    mcs_from_threshold,
    optimal_step,
    ue_decide,
)
from .metrics import IntervalRecord, actual_percentile, aggregate_runs, rmse
from .runner import ConfigError, InstanceResult, RunConfig, run, run_instance
from .validate import validate_estimators

__version__ = "0.1.0"
