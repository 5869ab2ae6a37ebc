"""Iterative model retraining under label noise.

Memory-corrected retraining iterations for Gaussian-mixture and
generalized-linear ground truths, the deterministic state-evolution recursions
that predict their test error, Bayes-optimal label aggregation, and the
practical bimodal-mixture soft-label recipe.
"""

__version__ = "0.1.0"

from .errors import (
    AmpRetrainError,
    BracketError,
    ConfigError,
    DegenerateFitError,
    DegenerateModelError,
    DivergenceError,
    DomainError,
    ParseError,
    ShapeError,
)
from .numerics import (
    RngStream,
    expect_gauss_1d,
    expect_gauss_2d,
    expect_std_normal_split,
    find_root_bisect,
    gauss_hermite,
    stable_logistic,
    std_normal_cdf,
    std_normal_pdf,
)
from .gmm import (
    AmpStateGmm,
    GmmDataset,
    GmmParams,
    IdentityAggregator,
    OptimalGmm,
    SmoothedConsensusRT,
    SmoothedFullRT,
    Trajectory,
    TrajectoryPoint,
    amp_step_gmm,
    eval_aggregator,
    eval_aggregator_deriv,
    initial_amp_state_gmm,
    onsager_coefficient,
    run_retraining_gmm,
    run_retraining_gmm_hard_baseline,
    sample_gmm_dataset,
    test_error_gmm,
    vanilla_estimator,
)
from .gmm_se import (
    CobwebTrace,
    PStarResult,
    SeMapSpec,
    SeStateGmm,
    cobweb_trace,
    constant_schedule,
    eta_map_ct,
    eta_map_ft,
    eta_map_opt,
    find_crossover,
    find_fixed_points,
    make_opt_schedule_gmm,
    opt_se_trace_gmm,
    p_star,
    se_error_from_eta,
    se_error_gmm,
    se_init_gmm,
    se_step_gmm,
)
from .glm import (
    AmpStateGlm,
    GlmDataset,
    GlmParams,
    LogisticLink,
    OptimalGlm,
    OptimalSign,
    ProbitLink,
    SignLink,
    amp_step_glm,
    error_curve_glm,
    hat_h_p,
    link_from_name,
    onsager_coefficient_glm,
    optimal_aggregator_glm,
    optimal_aggregator_sign,
    run_retraining_glm,
    sample_glm_dataset,
    test_error_glm,
)
from .glm_se import (
    SeStateGlm,
    make_opt_schedule_glm,
    opt_se_trace_glm,
    quadrature_init_mu_glm,
    se_error_glm,
    se_init_glm,
    se_step_glm_generic,
    se_step_glm_opt,
)
from .bayesmix import (
    BayesMixConfig,
    BimodalFit,
    LogitRecord,
    RetrainDemoResult,
    bayesmix_aggregate,
    bayesmix_retrain_demo,
    em_loglik_history,
    emit_targets,
    fit_bimodal_em,
)
from .harness import (
    ExperimentConfig,
    SimulationResult,
    build_params,
    se_trace,
    simulate,
    write_simulation_outputs,
)
