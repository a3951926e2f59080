"""Rescaled Polya urn: simulation, asymptotics, coupling, and the inflated
chi-squared goodness-of-fit workflow."""

from .model import (
    DerivedConstants,
    ModelParams,
    Regime,
    RegimeTag,
    classify_regime,
    derive_constants,
    predictive_mean,
)
from .simulate import (
    Trajectory,
    UrnState,
    empirical_mean,
    make_generator,
    simulate_trajectory,
    step,
    trajectory_to_csv,
)
from .kernel import (
    LinearModel,
    clt_covariance,
    linear_model_sigma,
    matrix_power_closed_form,
    rp_linear_model,
    transition_matrix_beta0,
)
from .coupling import (
    ContractionDiagnostic,
    CoupledPair,
    contraction_diagnostic,
    coupled_trajectories,
    maximal_coupling_pair,
)
from .specfun import GammaDist, chi2_quantile, gamma_quantile, regularized_gamma_lower
from .gof import TestReport, chi_squared_stat, gof_test, quadratic_form_stat
from .clusters import (
    ClusteredSample,
    LambdaEstimate,
    build_null_probs,
    cluster_test,
    estimate_lambda,
    lambda_confidence_interval,
    q_statistic,
    read_clustered_csv,
)
from .montecarlo import (
    ReplicationPlan,
    VerificationReport,
    empirical_covariance,
    ks_distance,
    run_replications,
    verify_beta_gt1,
    verify_clt,
    verify_edge_laws,
)

__version__ = "0.1.0"
