"""The observed learner: REINFORCE on the gridworld, plus its trajectory log.

The agent samples a whole episode with fixed parameters, then applies the
per-step update ``theta += alpha * gamma**t * R(s_{t+1}) * grad ln pi(a_t|s_t)``
for t = 0, 1, ... in order, each step using the parameters left by the
previous one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from . import kernels
from .artifacts import atomic_write_text, header_lines
from .errors import DivergenceError, UsageError
from .gridworld import GridWorld
from .tinynn import NetSpec, Network, mlp_new

log = logging.getLogger(__name__)


class StepRecord(NamedTuple):
    episode: int
    t: int
    state: int
    action: int
    next_state: int


@dataclass(eq=False)
class TrajectoryLog:
    """Observed (state, action, next_state) records, stored column-wise.

    Rows are ordered by episode and then timestep. No rewards are kept here.
    """
    episode: np.ndarray
    t: np.ndarray
    state: np.ndarray
    action: np.ndarray
    next_state: np.ndarray
    n_episodes: int
    horizon: int
    env_hash: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("episode", "t", "state", "action", "next_state"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.int64))
        # row offsets: episode e occupies rows [starts[e], starts[e + 1])
        self.starts = np.searchsorted(self.episode, np.arange(self.n_episodes + 1))

    def __len__(self) -> int:
        return len(self.state)

    def __iter__(self) -> Iterator[StepRecord]:
        for row in zip(self.episode, self.t, self.state, self.action, self.next_state):
            yield StepRecord(*map(int, row))

    def __eq__(self, other):
        return (isinstance(other, TrajectoryLog) and self.n_episodes == other.n_episodes
                and self.horizon == other.horizon and self.env_hash == other.env_hash
                and all(np.array_equal(getattr(self, c), getattr(other, c))
                        for c in ("episode", "t", "state", "action", "next_state")))

    def rows_for_episodes(self, lo: int, hi: int) -> np.ndarray:
        return np.arange(self.starts[lo], self.starts[hi])

    def check(self, env: GridWorld | None = None) -> None:
        """Raise UsageError unless episodes are contiguous and chained."""
        if len(self) == 0:
            raise UsageError("empty trajectory log")
        ep = self.episode
        if ep[0] != 0 or np.any(np.diff(ep) < 0) or np.any(np.diff(ep) > 1) or ep[-1] != self.n_episodes - 1:
            raise UsageError("episodes must be contiguous from 0")
        same = np.diff(ep) == 0
        if np.any(np.diff(self.t)[same] <= 0) or np.any(self.t < 0) or np.any(self.t >= self.horizon):
            raise UsageError("timesteps must increase within an episode and lie in [0, T)")
        if np.any(self.state[1:][same] != self.next_state[:-1][same]):
            raise UsageError("states are not chained within an episode")
        if env is not None and np.any(env.transitions[self.state, self.action] != self.next_state):
            raise UsageError("log is inconsistent with the environment's transitions")


def _log_from_arrays(states, actions, nexts, lengths, horizon, env_hash) -> TrajectoryLog:
    n_ep = len(lengths)
    mask = np.arange(states.shape[1])[None, :] < lengths[:, None]
    ep = np.broadcast_to(np.arange(n_ep)[:, None], states.shape)
    tt = np.broadcast_to(np.arange(states.shape[1])[None, :], states.shape)
    return TrajectoryLog(ep[mask], tt[mask], states[mask], actions[mask], nexts[mask],
                         n_ep, horizon, env_hash)


def _rollout(env: GridWorld, params: np.ndarray, spec: NetSpec, uniforms: np.ndarray,
             alpha: float = 0.0, gamma: float = 1.0, update: bool = False,
             arrival: np.ndarray | None = None, backend=None):
    be = backend or kernels.backend
    n_ep, horizon = uniforms.shape
    shape = (n_ep, horizon)
    states, actions, nexts = (np.zeros(shape, dtype=np.int64) for _ in range(3))
    lengths = np.zeros(n_ep, dtype=np.int64)
    returns = np.zeros(n_ep)
    arrival = env.arrival_reward if arrival is None else np.ascontiguousarray(arrival, dtype=np.float64)
    bad = be.rollout(params, np.asarray(spec.layer_sizes, dtype=np.int64), env.transitions, arrival,
                     env.config.start, env.config.goal, env.config.terminal_goal,
                     np.ascontiguousarray(uniforms), alpha, gamma, update,
                     states, actions, nexts, lengths, returns)
    return bad, states, actions, nexts, lengths, returns


def run_episode(env: GridWorld, policy: Network, rng_seed: int, backend=None):
    """Sample one episode. Returns (records, true rewards); the rewards are
    kept apart from the records."""
    if policy.spec.head != "softmax":
        raise UsageError("run_episode needs a softmax policy")
    u = np.random.default_rng(rng_seed).random((1, env.horizon))
    _, s, a, n, lengths, _ = _rollout(env, policy.params.copy(), policy.spec, u, backend=backend)
    L = int(lengths[0])
    records = [StepRecord(0, t, int(s[0, t]), int(a[0, t]), int(n[0, t])) for t in range(L)]
    rewards = env.arrival_reward[n[0, :L]].copy()
    return records, rewards


class ForwardRun(NamedTuple):
    policy: Network
    log: TrajectoryLog
    returns: np.ndarray      # undiscounted return of every episode


def reinforce_train(env: GridWorld, spec: NetSpec, episodes: int, alpha: float, gamma: float,
                    seed: int, arrival: np.ndarray | None = None, backend=None) -> ForwardRun:
    """Train a policy from ``mlp_new(spec)`` for ``episodes`` episodes.

    ``seed`` drives action sampling; initial weights come from
    ``spec.init_seed``. ``arrival`` replaces the environment's rewards (used
    when retraining on a learned reward).
    """
    if spec.head != "softmax":
        raise UsageError("forward policies need a softmax head")
    if not alpha > 0:
        raise UsageError("alpha must be positive")
    if not 0 < gamma <= 1:
        raise UsageError("gamma must lie in (0, 1]")
    net = mlp_new(spec)
    uniforms = np.random.default_rng(seed).random((episodes, env.horizon))
    bad, s, a, n, lengths, returns = _rollout(env, net.params, spec, uniforms, alpha, gamma,
                                              update=True, arrival=arrival, backend=backend)
    if bad >= 0:
        raise DivergenceError(f"policy parameters became non-finite after episode {bad}")
    trajectory = _log_from_arrays(s, a, n, lengths, env.horizon, env.fingerprint())
    log.debug("forward: %d episodes, last-10%% mean return %.3f", episodes,
              returns[-max(1, episodes // 10):].mean())
    return ForwardRun(net, trajectory, returns)


def greedy_rollout(policy: Network, env: GridWorld) -> list[int]:
    """States visited by always taking the most probable action (ties go to
    the lowest action id), starting from the start cell."""
    from .tinynn import policy_table
    table = policy_table(policy)
    path = [env.config.start]
    s = env.config.start
    for _ in range(env.horizon):
        s = int(env.transitions[s, int(np.argmax(table[s]))])
        path.append(s)
        if env.config.terminal_goal and s == env.config.goal:
            break
    return path


def steps_to_goal(path: list[int], goal: int) -> int | None:
    """Number of steps until the goal is first entered, or None."""
    for i, s in enumerate(path[1:], start=1):
        if s == goal:
            return i
    return None


# -- files -------------------------------------------------------------------

LOG_COLUMNS = "episode,t,state,action,next_state"


def dumps_log(trajectory: TrajectoryLog, meta: dict | None = None) -> str:
    lines = [f"# env_hash={trajectory.env_hash}  E={trajectory.n_episodes} T={trajectory.horizon}"]
    lines += header_lines(meta or {})
    lines.append(LOG_COLUMNS)
    cols = np.stack([trajectory.episode, trajectory.t, trajectory.state,
                     trajectory.action, trajectory.next_state], axis=1)
    lines += [",".join(map(str, row)) for row in cols.tolist()]
    return "\n".join(lines) + "\n"


def save_log(trajectory: TrajectoryLog, path, meta: dict | None = None) -> None:
    atomic_write_text(path, dumps_log(trajectory, meta))


def load_log(path) -> TrajectoryLog:
    env_hash, n_ep, horizon, meta, rows = "", None, None, {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, val = item.partition("=")
                    if key == "env_hash":
                        env_hash = val
                    elif key == "E":
                        n_ep = int(val)
                    elif key == "T":
                        horizon = int(val)
                    else:
                        meta[key] = val
                continue
            if line == LOG_COLUMNS:
                continue
            rows.append(line.split(","))
    if n_ep is None or horizon is None:
        raise UsageError(f"{path}: missing '# env_hash=... E=... T=...' header")
    arr = np.array(rows, dtype=np.int64).reshape(-1, 5)
    return TrajectoryLog(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4],
                         n_ep, horizon, env_hash, meta)


def save_true_rewards(trajectory: TrajectoryLog, env: GridWorld, path, meta: dict | None = None) -> None:
    """Side file with the reward of every logged step, for evaluation only."""
    rewards = env.arrival_reward[trajectory.next_state]
    lines = header_lines(meta or {}) + ["episode,t,reward"]
    lines += [f"{e},{t},{r!r}" for e, t, r in zip(trajectory.episode.tolist(),
                                                   trajectory.t.tolist(), rewards.tolist())]
    atomic_write_text(path, "\n".join(lines) + "\n")
