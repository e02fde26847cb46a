"""Reward estimation from consecutive cloned policies.

A scalar network ``beta`` is trained so that, for a logged transition
(s, a, s') at step t of an episode in bundle k,

    beta(s') * gamma**t * g_k(s, a)  ~  last_layer(psi_{k+1}) - last_layer(psi_k)

where ``g_k`` is the last-layer block of the score of cloned policy k. The
training loss is the summed squared Euclidean norm of that residual. With the
cloned policies frozen, each sample's squared residual is a quadratic in the
scalar beta(s'):

    ||beta g' - d||**2 = A beta**2 - 2 C beta + D,
    A = gamma**(2t) ||g||**2,  C = gamma**t g.d,  D = ||d||**2,

so A, C, D are computed once and the training loop only evaluates beta.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Literal, NamedTuple

import numpy as np

from . import kernels, tinynn
from .bundles import ClonedPolicySequence
from .errors import ConfigError, DivergenceError, UsageError
from .forward import TrajectoryLog
from .tinynn import NetSpec, Network, mlp_new

log = logging.getLogger(__name__)

GradientMode = Literal["log", "plain"]


class TrainingSample(NamedTuple):
    s: int
    a: int
    s_next: int
    t: int
    k: int      # 1-based bundle index, always < M


def beta_residual(sample: TrainingSample, beta: Network, policies: ClonedPolicySequence,
                  gamma: float, gradient_mode: GradientMode = "plain") -> np.ndarray:
    """beta(s') * gamma**t * g - (last_layer(psi_{k+1}) - last_layer(psi_k))."""
    M = len(policies)
    if not 1 <= sample.k < M:
        raise UsageError(f"sample bundle k={sample.k} has no successor policy (M={M})")
    if not 0 < gamma <= 1:
        raise UsageError("gamma must lie in (0, 1]")
    pol = policies[sample.k]
    n = pol.spec.layer_sizes[0]
    g = tinynn.grad_log_prob(pol, _onehot(sample.s, n), sample.a, gradient_mode)
    g = g[pol.spec.last_layer_slice()]
    diff = tinynn.last_layer(policies[sample.k + 1]) - tinynn.last_layer(pol)
    b = tinynn.value(beta, _onehot(sample.s_next, beta.spec.layer_sizes[0]))
    return b * gamma ** sample.t * g - diff


def _onehot(s: int, n: int) -> np.ndarray:
    x = np.zeros(n)
    x[s] = 1.0
    return x


@dataclass
class ResidualCoefficients:
    """Per-sample quadratic coefficients plus the sample identities."""
    rows: np.ndarray       # log row of each sample
    k: np.ndarray          # 1-based bundle index
    next_state: np.ndarray
    A: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __len__(self):
        return len(self.rows)

    def sample(self, i: int, log: TrajectoryLog) -> TrainingSample:
        r = int(self.rows[i])
        return TrainingSample(int(log.state[r]), int(log.action[r]), int(log.next_state[r]),
                              int(log.t[r]), int(self.k[i]))


def residual_coefficients(policies: ClonedPolicySequence, gamma: float,
                          gradient_mode: GradientMode = "plain") -> ResidualCoefficients:
    """Coefficients for every eligible sample: each record of bundles 1..M-1."""
    M = len(policies)
    if M < 2:
        raise UsageError("need at least two cloned policies (bundle M has no successor)")
    if gradient_mode not in ("log", "plain"):
        raise ConfigError(f"unknown gradient mode {gradient_mode!r}")
    out = {key: [] for key in ("rows", "k", "next_state", "A", "C", "D")}
    W_next = None
    for k in range(1, M):
        pol = policies[k]
        bundle = policies.bundles[k - 1]
        H = tinynn.last_hidden_table(pol)
        probs = tinynn.policy_table(pol)
        W, b = pol.layers()[-1]
        W_next, b_next = policies[k + 1].layers()[-1]
        dW, db = W_next - W, b_next - b

        s, a, t = bundle.states, bundle.actions, bundle.timesteps
        delta = -probs[s]
        delta[np.arange(len(s)), a] += 1.0
        if gradient_mode == "plain":
            delta *= probs[s, a][:, None]
        h = H[s]
        disc = gamma ** t.astype(np.float64)
        # g = [delta (x) h, delta]; d = [dW, db]
        g_dot_d = np.einsum("ij,ij->i", delta, h @ dW.T + db)
        g_sq = np.einsum("ij,ij->i", delta, delta) * (np.einsum("ij,ij->i", h, h) + 1.0)
        out["rows"].append(bundle.rows)
        out["k"].append(np.full(len(s), k, dtype=np.int64))
        out["next_state"].append(bundle.next_states)
        out["A"].append(disc * disc * g_sq)
        out["C"].append(disc * g_dot_d)
        out["D"].append(np.full(len(s), float(np.sum(dW * dW) + np.sum(db * db))))
    return ResidualCoefficients(*(np.ascontiguousarray(np.concatenate(out[key]))
                                  for key in ("rows", "k", "next_state", "A", "C", "D")))


def batch_loss(beta: Network, coef: ResidualCoefficients, idx) -> float:
    out = tinynn.value_table(beta)[coef.next_state[idx]]
    return float(np.sum(np.maximum(coef.A[idx] * out * out - 2.0 * coef.C[idx] * out + coef.D[idx], 0.0)))


def batch_loss_grad(beta: Network, coef: ResidualCoefficients, idx) -> np.ndarray:
    """Gradient of :func:`batch_loss` with respect to beta's parameters."""
    grad = np.zeros_like(beta.params)
    vt = tinynn.value_table(beta)
    n = beta.spec.layer_sizes[0]
    for i in np.atleast_1d(idx):
        s = int(coef.next_state[i])
        dout = 2.0 * (coef.A[i] * vt[s] - coef.C[i])
        grad += dout * tinynn.value_grad(beta, _onehot(s, n))
    return grad


class BetaFit(NamedTuple):
    beta: Network
    losses: np.ndarray


def train_beta(log: TrajectoryLog, policies: ClonedPolicySequence, beta_spec: NetSpec, gamma: float,
               Z: int, F: int, beta_lr: float, seed: int, gradient_mode: GradientMode = "plain",
               coefficients: ResidualCoefficients | None = None, backend=None) -> BetaFit:
    """``F`` SGD steps, each on the summed loss of ``Z`` samples drawn uniformly
    (with replacement) from the eligible samples. ``seed`` sets both beta's
    initial weights and the sample draws. Cloned policies are not modified."""
    if beta_spec.head != "linear" or beta_spec.layer_sizes[-1] != 1:
        raise ConfigError("beta needs a linear head with a single output")
    if Z < 1 or F < 1:
        raise ConfigError("Z and F must be >= 1")
    if policies.bundles and policies.bundles[0].log is not log and not (policies.bundles[0].log == log):
        raise UsageError("cloned policies were not built from this trajectory log")
    coef = coefficients or residual_coefficients(policies, gamma, gradient_mode)
    beta = mlp_new(replace(beta_spec, init_seed=seed))
    draws = np.random.default_rng((seed, 1)).integers(0, len(coef), size=(F, Z))
    losses = np.zeros(F)
    be = backend or kernels.backend
    bad = be.beta_fit(beta.params, np.asarray(beta.spec.layer_sizes, dtype=np.int64),
                      coef.next_state, coef.A, coef.C, coef.D, draws, float(beta_lr), losses)
    if bad >= 0:
        raise DivergenceError(f"beta loss became non-finite at training episode {bad}")
    return BetaFit(beta, losses)


def predict_rewards(beta: Network) -> np.ndarray:
    """beta evaluated at every one-hot state."""
    return tinynn.value_table(beta)
