"""Weighting-based causal inference for cluster randomized experiments with
post-randomization recruitment, plus sensitivity analysis and a simulation
engine for validating the estimators."""

from .data import (
    ClusterRecord,
    ColumnSchema,
    DatasetSummary,
    RecruitedDataset,
    design_ratio,
    from_arrays,
    load_csv,
    summarize,
    write_csv,
)
from .errors import (
    BootstrapUnreliableError,
    ConsistencyError,
    ConvergenceError,
    CrtWeightError,
    DegenerateArmError,
    DesignError,
    GenerationError,
    NoIncentivizedError,
    NumericalDegeneracyError,
    ParseError,
    SeparationError,
    UsageError,
)
from .estimators import (
    EstimateReport,
    NuEstimate,
    StrataProfiles,
    WeightScheme,
    estimate_all,
    estimate_nu,
    estimate_tau_c,
    hajek,
    strata_covariate_profile,
)
from .inference import (
    BootstrapResult,
    SandwichResult,
    ThetaHat,
    cluster_bootstrap,
    g_of_theta,
    grad_g,
    psi_contributions,
    sandwich,
)
from .sensitivity import (
    GammaBound,
    GammaSearch,
    MinimalGammaResult,
    bound_weighted_mean,
    bounds_tau_a,
    bounds_tau_ac,
    bounds_tau_c,
    minimal_gamma,
)
from .simulate import (
    MonteCarloSummary,
    SampleTruths,
    SimPopulation,
    SimScenario,
    StudyConfig,
    generate,
    make_scenario,
    run_study,
    sample_truths,
    scenario_labels,
)
from .wps import (
    FitResult,
    FitSettings,
    WpsModel,
    delta,
    fit,
    log_pseudo_likelihood,
    propensity,
    propensity_values,
)

__version__ = "0.1.0"
