"""Bundle behavior cloning.

Consecutive episodes of the trajectory log are grouped into bundles, each
bundle is summarized by its per-state empirical action distribution, and one
policy per bundle is fitted to that distribution by full-batch gradient
descent on the squared error, warm-started from the previous bundle's policy.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from . import kernels, tinynn
from .artifacts import read_manifest, write_manifest
from .errors import ConfigError, DivergenceError, MissingArtifactError, UsageError
from .forward import TrajectoryLog
from .gridworld import N_ACTIONS
from .tinynn import NetSpec, Network, mlp_new

Mode = Literal["disjoint", "sliding"]


@dataclass(eq=False)
class Bundle:
    """Bundle ``k`` (1-based): episodes ``[lo, hi)`` and the log rows it keeps."""
    k: int
    lo: int
    hi: int
    rows: np.ndarray
    log: TrajectoryLog = field(repr=False)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def states(self) -> np.ndarray:
        return self.log.state[self.rows]

    @property
    def actions(self) -> np.ndarray:
        return self.log.action[self.rows]

    @property
    def next_states(self) -> np.ndarray:
        return self.log.next_state[self.rows]

    @property
    def timesteps(self) -> np.ndarray:
        return self.log.t[self.rows]


def make_bundles(log: TrajectoryLog, B: int, mode: Mode = "disjoint") -> list[Bundle]:
    """``disjoint``: floor(E/B) bundles of B episodes, any incomplete tail is
    dropped. ``sliding``: E-B+1 windows with stride 1."""
    E = log.n_episodes
    if B < 1:
        raise ConfigError("bundle size B must be >= 1")
    if B > E:
        raise ConfigError(f"bundle size B={B} exceeds the number of episodes E={E}")
    if mode == "disjoint":
        ranges = [(k * B, (k + 1) * B) for k in range(E // B)]
    elif mode == "sliding":
        ranges = [(lo, lo + B) for lo in range(E - B + 1)]
    else:
        raise ConfigError(f"unknown bundle mode {mode!r}")
    return [Bundle(k + 1, lo, hi, log.rows_for_episodes(lo, hi), log)
            for k, (lo, hi) in enumerate(ranges)]


def thin_for_independence(log: TrajectoryLog, B: int) -> list[Bundle]:
    """Disjoint bundles of 2B episodes that keep only the records with an even
    row index in the log, so each holds about as many pairs as a plain
    B-episode bundle."""
    E = log.n_episodes
    if B < 1:
        raise ConfigError("bundle size B must be >= 1")
    if 2 * B > E:
        raise ConfigError(f"thinning needs 2B <= E (B={B}, E={E})")
    out = []
    for k in range(E // (2 * B)):
        lo, hi = 2 * B * k, 2 * B * (k + 1)
        rows = log.rows_for_episodes(lo, hi)
        out.append(Bundle(k + 1, lo, hi, rows[rows % 2 == 0], log))
    return out


@dataclass
class BundleDistribution:
    """Empirical action distribution at each visited state, sorted by state."""
    states: np.ndarray
    probs: np.ndarray      # (n_visited, 3)
    counts: np.ndarray     # visits per state

    def __getitem__(self, state: int) -> np.ndarray:
        i = np.searchsorted(self.states, state)
        if i == len(self.states) or self.states[i] != state:
            raise KeyError(state)
        return self.probs[i]

    def __contains__(self, state: int) -> bool:
        i = np.searchsorted(self.states, state)
        return i < len(self.states) and self.states[i] == state

    def as_dict(self) -> dict[int, np.ndarray]:
        return {int(s): p for s, p in zip(self.states, self.probs)}


def empirical_distribution(bundle: Bundle, n_actions: int = N_ACTIONS) -> BundleDistribution:
    if len(bundle) == 0:
        raise UsageError(f"bundle {bundle.k} is empty")
    states, inverse = np.unique(bundle.states, return_inverse=True)
    table = np.zeros((len(states), n_actions))
    np.add.at(table, (inverse, bundle.actions), 1.0)
    counts = table.sum(axis=1)
    return BundleDistribution(states, table / counts[:, None], counts.astype(np.int64))


@dataclass(eq=False)
class ClonedPolicySequence:
    policies: list[Network]
    spec: NetSpec
    bundles: list[Bundle] = field(repr=False)
    B: int = 1
    mode: str = "disjoint"
    independent: bool = False
    seed: int = 0
    final_losses: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.policies)

    def __getitem__(self, k: int) -> Network:
        """Policy of bundle ``k`` (1-based, as in the bundle index)."""
        if not 1 <= k <= len(self.policies):
            raise UsageError(f"bundle index {k} outside [1, {len(self.policies)}]")
        return self.policies[k - 1]

    def prefix(self, first_k: int) -> "ClonedPolicySequence":
        return ClonedPolicySequence(self.policies[:first_k], self.spec, self.bundles[:first_k],
                                    self.B, self.mode, self.independent, self.seed,
                                    None if self.final_losses is None else self.final_losses[:first_k])


def fit_bundle(net: Network, dist: BundleDistribution, epochs: int, lr: float, backend=None) -> float:
    """Fit ``net`` in place to one bundle's distribution; returns the final loss."""
    be = backend or kernels.backend
    return float(be.clone_fit(net.params, np.asarray(net.spec.layer_sizes, dtype=np.int64),
                              np.ascontiguousarray(dist.states, dtype=np.int64),
                              np.ascontiguousarray(dist.probs), int(epochs), float(lr)))


def clone_loss(net: Network, dist: BundleDistribution) -> float:
    """Sum over visited states of the mean squared error between the policy's
    action distribution and the empirical one."""
    p = tinynn.policy_table(net)[dist.states]
    return float(((p - dist.probs) ** 2).mean(axis=1).sum())


def clone_policies(log: TrajectoryLog, B: int, mode: Mode, spec: NetSpec, clone_lr: float,
                   clone_epochs: int, seed: int, independent: bool = False,
                   bundles: list[Bundle] | None = None, backend=None) -> ClonedPolicySequence:
    """One cloned policy per bundle; bundle k starts from the policy fitted to
    bundle k-1, the first from fresh weights seeded with ``seed``."""
    if bundles is None:
        bundles = thin_for_independence(log, B) if independent else make_bundles(log, B, mode)
    if spec.head != "softmax":
        raise ConfigError("cloned policies need a softmax head")
    net = mlp_new(NetSpec(spec.layer_sizes, spec.head, seed))
    policies, losses = [], np.zeros(len(bundles))
    for i, bundle in enumerate(bundles):
        loss = fit_bundle(net, empirical_distribution(bundle), clone_epochs, clone_lr, backend)
        if not np.isfinite(loss) or not np.all(np.isfinite(net.params)):
            raise DivergenceError(f"cloning diverged on bundle k={bundle.k}")
        losses[i] = loss
        policies.append(net.copy())
    return ClonedPolicySequence(policies, net.spec, bundles, B, "disjoint" if independent else mode,
                                independent, seed, losses)


# -- files -------------------------------------------------------------------

def save_sequence(seq: ClonedPolicySequence, directory, meta: dict | None = None) -> None:
    """Numbered snapshot files plus ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    header = {k: v for k, v in (meta or {}).items() if not isinstance(v, (dict, list))}
    for k, net in enumerate(seq.policies, start=1):
        tinynn.save(net, d / f"policy_{k:05d}.txt", {**header, "bundle": k})
    write_manifest(d / "manifest.json", {
        "M": len(seq.policies),
        "layer_sizes": list(seq.spec.layer_sizes),
        "head": seq.spec.head,
        "B": seq.B,
        "mode": seq.mode,
        "independent": seq.independent,
        "seed": seq.seed,
        "bundle_ranges": [[b.lo, b.hi] for b in seq.bundles],
        "final_losses": None if seq.final_losses is None else [float(x) for x in seq.final_losses],
        **(meta or {}),
    })


def load_sequence(directory, log: TrajectoryLog) -> ClonedPolicySequence:
    d = Path(directory)
    if not (d / "manifest.json").exists():
        raise MissingArtifactError(f"{d / 'manifest.json'} not found (produced by the 'clone' stage)")
    man = read_manifest(d / "manifest.json")
    policies = [tinynn.load(d / f"policy_{k:05d}.txt") for k in range(1, man["M"] + 1)]
    if man["independent"]:
        bundles = thin_for_independence(log, man["B"])
    else:
        bundles = make_bundles(log, man["B"], man["mode"])
    bundles = bundles[:man["M"]]
    if [[b.lo, b.hi] for b in bundles] != man["bundle_ranges"]:
        raise UsageError(f"{d}: bundle ranges do not match the trajectory log")
    losses = man.get("final_losses")
    return ClonedPolicySequence(policies, policies[0].spec, bundles, man["B"], man["mode"],
                                man["independent"], man["seed"],
                                None if losses is None else np.array(losses))
