"""Gradient-free noise-space optimization for pretrained generative samplers.

The optimizer steers the latent noise of a frozen generator toward high
reward by running a stationarity-preserving stochastic chain in noise
space and nudging it with Monte Carlo control estimates. No gradients of
the generator or the reward are required.
"""

from .core import (
    ConfigError,
    ContractError,
    EstimatorKind,
    Generator,
    IterationRecord,
    NumericsError,
    Reward,
    RunTrace,
    ZenoConfig,
    ZenoError,
    renormalize_to_sqrt_d,
    sample_standard_gaussian,
    split_rng,
)
from .estimators import (
    ParticleBatch,
    centered_exponential_control,
    exponential_control,
    linearized_control,
)
from .optimizer import (
    AnalyticReward,
    DriftReport,
    analytic_control_chain,
    draw_initial_noise,
    horizon_decay_coefficient,
    horizon_decay_exponential_approx,
    langevin_drift_check,
    ou_step,
    zeno_optimize,
    zeno_optimize_many,
)
from .baselines import (
    FdParams,
    best_of_n,
    default_noise_scale,
    fd_gradient_langevin,
    fd_langevin_many,
    match_fd_step_size,
)
from .toybench import (
    GmmWorld,
    ModeDistribution,
    default_world,
    discrete_kl,
    empirical_mode_distribution,
    flow_generate,
    flow_generator,
    gmm_log_density,
    gmm_score,
    make_circle_world,
    mode_reward_fn,
    nearest_mode_index,
    tilted_target_distribution,
    uncontrolled_mode_distribution,
    voronoi_mass_distribution,
)
from .metrics import (
    SweepCell,
    cosine_similarity_matrix,
    estimator_sweep,
    scaling_sweep,
    vendi_score,
)
from .se3 import (
    FramePose,
    FrameSet,
    Se3Baseline,
    Se3RunTrace,
    Se3ZenoConfig,
    frame_matching_reward,
    identity_frame_set,
    random_frame_set,
    rotation_geodesic_angle,
    se3_zeno_optimize,
    so3_exp,
    so3_log,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticReward",
    "ConfigError",
    "ContractError",
    "DriftReport",
    "EstimatorKind",
    "FdParams",
    "FramePose",
    "FrameSet",
    "Generator",
    "GmmWorld",
    "IterationRecord",
    "ModeDistribution",
    "NumericsError",
    "ParticleBatch",
    "Reward",
    "RunTrace",
    "Se3Baseline",
    "Se3RunTrace",
    "Se3ZenoConfig",
    "SweepCell",
    "ZenoConfig",
    "ZenoError",
    "analytic_control_chain",
    "best_of_n",
    "centered_exponential_control",
    "cosine_similarity_matrix",
    "default_noise_scale",
    "default_world",
    "discrete_kl",
    "draw_initial_noise",
    "empirical_mode_distribution",
    "estimator_sweep",
    "exponential_control",
    "fd_gradient_langevin",
    "fd_langevin_many",
    "flow_generate",
    "flow_generator",
    "frame_matching_reward",
    "gmm_log_density",
    "gmm_score",
    "horizon_decay_coefficient",
    "horizon_decay_exponential_approx",
    "identity_frame_set",
    "langevin_drift_check",
    "linearized_control",
    "make_circle_world",
    "match_fd_step_size",
    "mode_reward_fn",
    "nearest_mode_index",
    "ou_step",
    "random_frame_set",
    "renormalize_to_sqrt_d",
    "rotation_geodesic_angle",
    "sample_standard_gaussian",
    "scaling_sweep",
    "se3_zeno_optimize",
    "so3_exp",
    "so3_log",
    "split_rng",
    "tilted_target_distribution",
    "uncontrolled_mode_distribution",
    "vendi_score",
    "voronoi_mass_distribution",
    "zeno_optimize",
    "zeno_optimize_many",
    "__version__",
]
