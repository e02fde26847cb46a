"""Error-bound calculators for bundle behavior cloning.

The bundle bound for bundle size B, trajectory length T, policy drift eps,
discount gamma, confidence delta and policy-class size |Pi| is

    4 gamma (B-1) eps / (1-gamma)  +  4 ln(|Pi|/delta) / (B T)  +  2 eps^2 (B-1)^2

and holds with probability (1-delta)^2. Plain behavior cloning from one
trajectory at the same probability level gives 2 ln(|Pi| / (2 delta - delta^2)) / T.

|Pi| is an exogenous modelling knob: the bound assumes a finite policy class,
which a neural policy is not.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from . import tinynn
from .bundles import ClonedPolicySequence
from .errors import ConfigError, UsageError


def tv_distance(p, q, atol: float = 1e-9) -> float:
    """Total variation distance between two finite distributions (half the L1 norm)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.ndim != 1 or p.shape != q.shape:
        raise UsageError(f"distributions must be 1-D with equal length, got {p.shape} and {q.shape}")
    for v in (p, q):
        if np.any(v < -atol) or abs(v.sum() - 1.0) > atol or not np.all(np.isfinite(v)):
            raise UsageError("argument is not a probability vector")
    return 0.5 * float(np.abs(p - q).sum())


def estimate_epsilon(policies: ClonedPolicySequence | list, states=None) -> float:
    """Largest TV distance between consecutive policies over the given states
    (default: every state). The smallest drift bound the sequence satisfies."""
    nets = policies.policies if isinstance(policies, ClonedPolicySequence) else list(policies)
    if len(nets) < 2:
        raise UsageError("need at least two policies to estimate the drift")
    tables = [tinynn.policy_table(n) for n in nets]
    idx = slice(None) if states is None else np.asarray(states, dtype=np.int64)
    worst = 0.0
    for a, b in zip(tables, tables[1:]):
        worst = max(worst, float(0.5 * np.abs(a[idx] - b[idx]).sum(axis=1).max()))
    return worst


def consecutive_tv(policies: ClonedPolicySequence | list) -> np.ndarray:
    """Per consecutive pair: TV distance averaged over all states."""
    nets = policies.policies if isinstance(policies, ClonedPolicySequence) else list(policies)
    tables = [tinynn.policy_table(n) for n in nets]
    return np.array([0.5 * np.abs(a - b).sum(axis=1).mean() for a, b in zip(tables, tables[1:])])


@dataclass(frozen=True)
class BoundInputs:
    B: int
    T: int
    epsilon: float
    gamma: float
    delta: float
    policy_class_size: float

    def validate(self) -> None:
        if self.B < 1:
            raise ConfigError("B must be >= 1")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if not self.epsilon >= 0:
            raise ConfigError("epsilon must be >= 0")
        if self.gamma >= 1:
            raise ConfigError("the bound is undefined for gamma = 1")
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if not self.policy_class_size > 1:
            raise ConfigError("policy_class_size must exceed 1")


@dataclass(frozen=True)
class BoundReport:
    inputs: BoundInputs
    drift_term: float          # 4 gamma (B-1) eps / (1-gamma)
    sample_term: float         # 4 ln(|Pi|/delta) / (B T)
    quadratic_term: float      # 2 eps^2 (B-1)^2
    bundle_bound: float
    standard_bound: float
    probability: float         # (1-delta)^2 for both bounds

    @property
    def terms(self) -> tuple[float, float, float]:
        return self.drift_term, self.sample_term, self.quadratic_term


def bundle_bound(inputs: BoundInputs) -> BoundReport:
    inputs.validate()
    B, T, eps, g, d, n = (inputs.B, inputs.T, inputs.epsilon, inputs.gamma,
                          inputs.delta, inputs.policy_class_size)
    t1 = 4.0 * g * (B - 1) * eps / (1.0 - g)
    t2 = 4.0 * math.log(n / d) / (B * T)
    t3 = 2.0 * eps * eps * (B - 1) ** 2
    return BoundReport(inputs, t1, t2, t3, t1 + t2 + t3, standard_bound(T, d, n), (1.0 - d) ** 2)


def standard_bound(T: int, delta: float, policy_class_size: float) -> float:
    """Single-trajectory cloning bound at probability (1-delta)^2."""
    return 2.0 * math.log(policy_class_size / (2.0 * delta - delta * delta)) / T


def within_bundle_bounds(B: int, epsilon: float, gamma: float) -> tuple[float, float]:
    """(policy TV bound, visitation L1 bound) for two policies of one bundle."""
    if B < 1:
        raise ConfigError("B must be >= 1")
    if gamma >= 1:
        raise ConfigError("the visitation bound is undefined for gamma = 1")
    return (B - 1) * epsilon, 2.0 * gamma * (B - 1) * epsilon / (1.0 - gamma)


def averaged_drift_bound(B: int, epsilon: float) -> float:
    """Sharper drift bound for a policy against the bundle average, (B-1)^2/B * eps."""
    return (B - 1) ** 2 / B * epsilon


class OptimalB(NamedTuple):
    B: int
    bound: float
    advantage: bool


def bound_sweep(inputs: BoundInputs, B_max: int) -> list[BoundReport]:
    if B_max < 1:
        raise ConfigError("B_max must be >= 1")
    return [bundle_bound(replace(inputs, B=b)) for b in range(1, B_max + 1)]


def optimal_bundle_size(inputs: BoundInputs, B_max: int) -> OptimalB:
    """Brute-force minimiser of the bundle bound over B in [1, B_max]; the
    ``B`` field of ``inputs`` is ignored. Ties go to the smallest B."""
    sweep = bound_sweep(inputs, B_max)
    totals = np.array([r.bundle_bound for r in sweep])
    i = int(np.argmin(totals))
    return OptimalB(i + 1, float(totals[i]), bool(totals[i] < sweep[0].standard_bound))


SWEEP_COLUMNS = ("B", "term1", "term2", "term3", "total", "standard_comparator")


def sweep_rows(reports: list[BoundReport]) -> list[tuple]:
    return [(r.inputs.B, r.drift_term, r.sample_term, r.quadratic_term, r.bundle_bound, r.standard_bound)
            for r in reports]
