"""Deterministic grid MDP with per-cell arrival rewards.

Cells are indexed row-major from the top-left corner. The three actions are
``RIGHT=0``, ``LEFT=1`` and ``DOWN=2``; moves that would leave the grid keep the
agent in place. The reward for a transition depends only on the arrival cell.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, UsageError

RIGHT, LEFT, DOWN = 0, 1, 2
N_ACTIONS = 3
ACTION_NAMES = ("right", "left", "down")

REWARD_LOW, REWARD_HIGH = -5.0, -2.0
# Off-corridor cells draw from these levels; the corridor sits at REWARD_HIGH.
OFF_PATH_LEVELS = (-5.0, -4.0, -3.0)


def staircase_path(width: int, height: int) -> list[int]:
    """Cells strictly between the top-left and bottom-right corners on the
    alternating right/down staircase (right first). Leftover moves on a
    non-square grid are appended along the last row/column."""
    r = c = 0
    cells = []
    move_right = True
    while (r, c) != (height - 1, width - 1):
        if (move_right and c < width - 1) or r == height - 1:
            c += 1
        else:
            r += 1
        move_right = not move_right
        cells.append(r * width + c)
    return cells[:-1]


def default_cell_rewards(width: int = 7, height: int = 7, goal: int | None = None,
                         goal_reward: float = 20.0, reward_seed: int = 7) -> tuple[float, ...]:
    """The shipped reward map: a staircase corridor at -2 from the start to the
    goal, every other non-goal cell drawn uniformly from {-5, -4, -3}."""
    n = width * height
    goal = n - 1 if goal is None else goal
    rng = np.random.default_rng(reward_seed)
    rewards = rng.choice(np.array(OFF_PATH_LEVELS), size=n)
    if goal == n - 1:
        rewards[staircase_path(width, height)] = REWARD_HIGH
    rewards[goal] = goal_reward
    return tuple(float(x) for x in rewards)


@dataclass(frozen=True)
class GridConfig:
    width: int = 7
    height: int = 7
    start: int = 0
    goal: int = 48
    goal_reward: float = 20.0
    horizon: int = 15
    reward_seed: int = 7
    cell_rewards: tuple[float, ...] | None = None
    # When False the goal is an ordinary cell: episodes always last `horizon`
    # steps and the agent keeps collecting goal_reward while it stays there.
    terminal_goal: bool = False

    def __post_init__(self):
        if self.cell_rewards is None:
            object.__setattr__(self, "cell_rewards", default_cell_rewards(
                self.width, self.height, self.goal, self.goal_reward, self.reward_seed))
        else:
            object.__setattr__(self, "cell_rewards", tuple(float(x) for x in self.cell_rewards))

    @property
    def n_states(self) -> int:
        return self.width * self.height

    def validate(self) -> None:
        n = self.n_states
        if self.width < 1 or self.height < 1:
            raise ConfigError("grid.width/grid.height must be positive")
        if self.horizon < 1:
            raise ConfigError("grid.horizon must be >= 1")
        for name in ("start", "goal"):
            v = getattr(self, name)
            if not 0 <= v < n:
                raise ConfigError(f"grid.{name}={v} outside [0, {n})")
        if self.start == self.goal:
            raise ConfigError("grid.start must differ from grid.goal")
        if len(self.cell_rewards) != n:
            raise ConfigError(f"grid.cell_rewards has {len(self.cell_rewards)} entries, expected {n}")
        others = np.delete(np.asarray(self.cell_rewards), self.goal)
        if not np.all(np.isfinite(others)):
            raise ConfigError("grid.cell_rewards must be finite")
        if np.any(others < REWARD_LOW) or np.any(others > REWARD_HIGH):
            raise ConfigError(f"grid.cell_rewards: non-goal rewards must lie in [{REWARD_LOW}, {REWARD_HIGH}]")
        if not self.goal_reward > others.max():
            raise ConfigError("grid.goal_reward must exceed every non-goal cell reward")


class StepOutcome(NamedTuple):
    next_state: int
    reward: float
    done: bool


@dataclass(frozen=True, eq=False)
class GridWorld:
    """Immutable environment built by :func:`new_env`.

    ``transitions[s, a]`` is the successor cell and ``arrival_reward[s]`` the
    reward for landing in ``s``; both arrays are read-only.
    """
    config: GridConfig
    transitions: np.ndarray = field(repr=False)
    arrival_reward: np.ndarray = field(repr=False)

    @property
    def n_states(self) -> int:
        return self.config.n_states

    @property
    def horizon(self) -> int:
        return self.config.horizon

    def step(self, state: int, action: int, t: int = 0) -> StepOutcome:
        """Move from ``state`` with ``action``; ``t`` is the 0-based index of
        this step within the episode and only affects ``done``."""
        cfg = self.config
        if not 0 <= state < cfg.n_states:
            raise UsageError(f"state {state} out of range")
        if action not in (RIGHT, LEFT, DOWN):
            raise UsageError(f"action {action} not in {{0, 1, 2}}")
        if cfg.terminal_goal and state == cfg.goal:
            raise UsageError("cannot step from the terminal goal state")
        nxt = int(self.transitions[state, action])
        done = (cfg.terminal_goal and nxt == cfg.goal) or t + 1 >= cfg.horizon
        return StepOutcome(nxt, float(self.arrival_reward[nxt]), bool(done))

    def encode_state(self, state: int) -> np.ndarray:
        return encode_state(state, self.n_states)

    def reward_grid(self) -> np.ndarray:
        return self.arrival_reward.reshape(self.config.height, self.config.width).copy()

    def fingerprint(self) -> str:
        """Short hex digest of the dynamics and rewards."""
        h = hashlib.sha256()
        h.update(self.transitions.tobytes())
        h.update(self.arrival_reward.tobytes())
        h.update(f"{self.config.start},{self.config.goal},{self.config.horizon},"
                 f"{int(self.config.terminal_goal)}".encode())
        return h.hexdigest()[:16]


def new_env(config: GridConfig) -> GridWorld:
    config.validate()
    w, h, n = config.width, config.height, config.n_states
    trans = np.empty((n, N_ACTIONS), dtype=np.int64)
    for s in range(n):
        r, c = divmod(s, w)
        trans[s, RIGHT] = r * w + min(c + 1, w - 1)
        trans[s, LEFT] = r * w + max(c - 1, 0)
        trans[s, DOWN] = min(r + 1, h - 1) * w + c
    arrival = np.asarray(config.cell_rewards, dtype=np.float64).copy()
    arrival[config.goal] = config.goal_reward
    trans.flags.writeable = False
    arrival.flags.writeable = False
    return GridWorld(config, trans, arrival)


def encode_state(state: int, n_states: int = 49) -> np.ndarray:
    """One-hot feature vector for ``state``."""
    if not 0 <= state < n_states:
        raise UsageError(f"state {state} out of range [0, {n_states})")
    x = np.zeros(n_states)
    x[state] = 1.0
    return x
