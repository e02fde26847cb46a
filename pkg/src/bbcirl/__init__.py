"""Reward learning from a learning agent via bundle behavior cloning."""
from .bundles import (Bundle, BundleDistribution, ClonedPolicySequence, clone_policies,
                      empirical_distribution, make_bundles, thin_for_independence)
from .config import PipelineConfig
from .errors import BBCError, ConfigError, DivergenceError, MissingArtifactError, UsageError
from .evaluation import (confidence_bands, evaluate_policy, last_layer_norm_series, normalize_grid,
                         retrain_from_beta, truncate_bundles)
from .forward import TrajectoryLog, reinforce_train, run_episode
from .gridworld import GridConfig, GridWorld, new_env
from .kernels import BACKEND_NAME
from .reward import TrainingSample, beta_residual, predict_rewards, train_beta
from .theory import (BoundInputs, BoundReport, bundle_bound, estimate_epsilon, within_bundle_bounds,
                     optimal_bundle_size, tv_distance)
from .tinynn import NetSpec, Network, grad_log_prob, mlp_new, policy_forward, sgd_step

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "BBCError",
    "BoundInputs",
    "BoundReport",
    "Bundle",
    "BundleDistribution",
    "ClonedPolicySequence",
    "ConfigError",
    "DivergenceError",
    "GridConfig",
    "GridWorld",
    "MissingArtifactError",
    "NetSpec",
    "Network",
    "PipelineConfig",
    "TrainingSample",
    "TrajectoryLog",
    "UsageError",
    "beta_residual",
    "bundle_bound",
    "clone_policies",
    "confidence_bands",
    "empirical_distribution",
    "estimate_epsilon",
    "evaluate_policy",
    "grad_log_prob",
    "last_layer_norm_series",
    "within_bundle_bounds",
    "make_bundles",
    "mlp_new",
    "new_env",
    "normalize_grid",
    "optimal_bundle_size",
    "policy_forward",
    "predict_rewards",
    "reinforce_train",
    "retrain_from_beta",
    "run_episode",
    "sgd_step",
    "thin_for_independence",
    "train_beta",
    "truncate_bundles",
    "tv_distance",
]
