"""Langevin posterior sampling, rate equations and contraction-rate scaling studies."""

__version__ = "0.1.0"

from .errors import (
    ChainAbort,
    ConfigurationError,
    ContractionLabError,
    DomainError,
    EstimationError,
    NumericError,
    RateEquationError,
)
from .model_zoo import (
    Dataset,
    EvalMode,
    GradOracle,
    ModelKind,
    ModelSpec,
    PopulationConfig,
    PriorSpec,
    generate_dataset,
    population_grad,
    posterior_oracle,
    prior_concentration_bound,
    prior_log_grad,
    sample_loglik,
    sample_loglik_grad,
)
from .langevin import (
    DiffusionConfig,
    RadiusEstimate,
    Sampler,
    Trajectory,
    estimate_moment_radius,
    estimate_quantile_radius,
    simulate_chain,
    simulate_chains,
    split_chain_diagnostic,
)
from .rate_theory import (
    AssumptionReport,
    RateProfile,
    RateSolution,
    check_profile_inequalities,
    check_growth_limit,
    check_weak_concavity,
    power_law_bound,
    eval_profile,
    solve_rate_equation,
)
from .perturbation import DeviationEstimate, EnvelopeFit, estimate_sup_deviation, fit_envelope
from .harness import ExponentFit, ScalingTable, StudyConfig, emit_report, fit_rate_exponent, load_report, run_scaling_study
