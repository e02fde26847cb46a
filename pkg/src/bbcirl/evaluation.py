"""Evaluation of learned rewards and of policies retrained on them."""
from __future__ import annotations

import csv
import io
import logging
import warnings
from dataclasses import dataclass, field
from typing import Literal, NamedTuple

import numpy as np
from scipy.stats import spearmanr

from . import tinynn
from .artifacts import atomic_write_text
from .bundles import ClonedPolicySequence
from .errors import ConfigError, UsageError
from .forward import TrajectoryLog, _rollout, greedy_rollout, reinforce_train, steps_to_goal
from .gridworld import GridWorld
from .reward import ResidualCoefficients, predict_rewards, residual_coefficients, train_beta
from .tinynn import NetSpec, Network

log = logging.getLogger(__name__)

# Policy architectures compared against the observed learner's own (49, 16, 3).
ARCHITECTURES = {
    "same": (49, 16, 3),
    "hidden8": (49, 8, 3),
    "hidden24": (49, 24, 3),
    "hidden32": (49, 32, 3),
    "layers3": (49, 16, 16, 3),
    "layers5": (49, 16, 16, 16, 16, 3),
}


@dataclass
class NormalizedGrid:
    values: np.ndarray      # in [0, 1]
    provenance: str         # "true" or "learned"
    lo: float
    hi: float

    def grid(self, width: int = 7) -> np.ndarray:
        return self.values.reshape(-1, width)


def normalize_grid(raw, provenance: str = "learned") -> NormalizedGrid:
    """Min-max map onto [0, 1]. A constant input maps to 0.5 everywhere."""
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise UsageError("cannot normalize non-finite values")
    lo, hi = float(raw.min()), float(raw.max())
    if hi == lo:
        warnings.warn("constant reward estimate; normalized to 0.5", RuntimeWarning, stacklevel=2)
        return NormalizedGrid(np.full_like(raw, 0.5), provenance, lo, hi)
    return NormalizedGrid((raw - lo) / (hi - lo), provenance, lo, hi)


def evaluate_policy(policy: Network, env: GridWorld, n_episodes: int, seed: int,
                    backend=None) -> tuple[float, float]:
    """Sample mean and sample std of undiscounted true returns over
    ``n_episodes`` stochastic episodes."""
    if n_episodes < 2:
        raise UsageError("need at least two episodes for a sample std")
    u = np.random.default_rng(seed).random((n_episodes, env.horizon))
    *_, returns = _rollout(env, policy.params.copy(), policy.spec, u, backend=backend)
    return float(returns.mean()), float(returns.std(ddof=1))


Transform = Literal["raw", "standardize"]


def reward_for_retraining(estimate, transform: Transform = "standardize", scale: float = 10.0) -> np.ndarray:
    """Per-state rewards fed to the learner: ``scale * estimate`` (raw) or
    ``scale * (estimate - mean) / std`` (standardize)."""
    v = np.asarray(estimate, dtype=np.float64)
    if transform == "raw":
        return scale * v
    if transform == "standardize":
        sd = v.std()
        return scale * (v - v.mean()) / sd if sd > 0 else np.zeros_like(v)
    raise ConfigError(f"unknown reward transform {transform!r}")


class RetrainResult(NamedTuple):
    policy: Network
    mean: float
    std: float
    steps_to_goal: int | None
    rewards: np.ndarray      # per-state rewards used for training


def retrain_from_beta(beta: Network, env: GridWorld, spec: NetSpec, episodes: int, alpha: float,
                      gamma: float, seed: int, transform: Transform = "standardize",
                      scale: float = 10.0, eval_episodes: int = 500, eval_seed: int = 0,
                      backend=None) -> RetrainResult:
    """REINFORCE on the environment's dynamics with rewards from ``beta``,
    then evaluation against the true rewards."""
    rewards = reward_for_retraining(predict_rewards(beta), transform, scale)
    run = reinforce_train(env, spec, episodes, alpha, gamma, seed, arrival=rewards, backend=backend)
    mean, std = evaluate_policy(run.policy, env, eval_episodes, eval_seed, backend)
    reach = steps_to_goal(greedy_rollout(run.policy, env), env.config.goal)
    return RetrainResult(run.policy, mean, std, reach, rewards)


def visitation_percent(log: TrajectoryLog, n_states: int = 49) -> np.ndarray:
    """Share of logged arrivals at each state, in percent."""
    counts = np.bincount(log.next_state, minlength=n_states).astype(np.float64)
    return 100.0 * counts / counts.sum()


@dataclass
class ConfidenceBands:
    lower: np.ndarray
    upper: np.ndarray
    mean: np.ndarray
    visitation: np.ndarray
    estimates: np.ndarray = field(repr=False)   # (runs, n_states) normalized
    seeds: tuple[int, ...] = ()

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def rank_correlation(self) -> float:
        """Spearman correlation between visitation and band width."""
        return float(spearmanr(self.visitation, self.width).correlation)


def confidence_bands(log: TrajectoryLog, policies: ClonedPolicySequence, beta_spec: NetSpec,
                     gamma: float, Z: int, F: int, beta_lr: float, seeds,
                     gradient_mode: str = "plain", coefficients: ResidualCoefficients | None = None,
                     backend=None) -> ConfidenceBands:
    """Train beta once per seed; per state, mean +- 1.96 sample std of the
    normalized estimates."""
    seeds = tuple(int(s) for s in seeds)
    if len(seeds) < 2:
        raise UsageError("confidence bands need at least two runs")
    coef = coefficients or residual_coefficients(policies, gamma, gradient_mode)
    est = np.array([normalize_grid(predict_rewards(train_beta(
        log, policies, beta_spec, gamma, Z, F, beta_lr, s, gradient_mode, coef, backend).beta)).values
        for s in seeds])
    mean = est.mean(axis=0)
    half = 1.96 * est.std(axis=0, ddof=1)
    return ConfidenceBands(mean - half, mean + half, mean, visitation_percent(log, est.shape[1]),
                           est, seeds)


def truncate_bundles(policies: ClonedPolicySequence, first_k: int) -> ClonedPolicySequence:
    if not 1 <= first_k <= len(policies):
        raise UsageError(f"first_k={first_k} outside [1, {len(policies)}]")
    return policies.prefix(first_k)


def last_layer_norm_series(policies: ClonedPolicySequence) -> tuple[np.ndarray, np.ndarray]:
    """Norm of each policy's last layer, and |difference| between neighbours."""
    if len(policies) < 1:
        raise UsageError("empty policy sequence")
    norms = np.array([np.linalg.norm(tinynn.last_layer(p)) for p in policies.policies])
    return norms, np.abs(np.diff(norms))


# -- results table -------------------------------------------------------------

class ResultRow(NamedTuple):
    description: str
    mean: float
    std: float
    seeds: tuple[int, ...] = ()


def results_csv(rows: list[ResultRow], header: list[str] | None = None) -> str:
    buf = io.StringIO()
    for line in header or []:
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["description", "mean", "std", "seeds"])
    for r in rows:
        w.writerow([r.description, repr(float(r.mean)), repr(float(r.std)), " ".join(map(str, r.seeds))])
    return buf.getvalue()


def write_results_csv(path, rows: list[ResultRow], header: list[str] | None = None) -> None:
    atomic_write_text(path, results_csv(rows, header))
