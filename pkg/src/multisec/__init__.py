"""Simulation laboratory for the multisecretary problem.

Online hiring over a known ability distribution on [0, 1]: re-solving and
gap-snapping policies, the hindsight benchmark, an exact pathwise regret
decomposition, exact small-instance oracles, and a Monte-Carlo harness for
regret-scaling experiments.
"""

from .coupling import (
    CouplingTrace,
    EventFrequencies,
    MartingaleReport,
    couple_trace,
    event_frequencies,
    martingale_diagnostic,
    otg_interval,
    otg_threshold,
    step_compensation,
    verify_decomposition,
)
from .distributions import (
    ClusterReport,
    Discrete,
    FBeta,
    GapStructure,
    PiecewiseUniform,
    QuantileModel,
    Uniform,
    bisect_quantile,
    parse_model,
    verify_clustered,
)
from .dp_oracle import (
    OracleReport,
    dp_table,
    exact_offline_expectation,
    optimal_online_value,
    regret_oracle,
)
from .errors import (
    ConfigurationError,
    CouplingError,
    DomainError,
    FitError,
    SizeError,
    UnsupportedModelError,
)
from .harness import (
    ExperimentConfig,
    FitResult,
    RegretEstimate,
    emit_csv,
    emit_dat,
    emit_meta,
    emit_outputs,
    fit_exponent,
    parse_horizons,
    run_experiment,
)
from .policies import (
    CwGConfig,
    PolicyTrace,
    SamplePath,
    ce_threshold,
    cwg_snap,
    draw_path,
    offline_value,
    path_from_uniforms,
    run_ce,
    run_cwg,
    run_offline,
    run_policy,
    run_static,
)

__version__ = "0.1.0"
