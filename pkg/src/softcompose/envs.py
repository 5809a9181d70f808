"""Gridworld MDPs, line/obstacle reward tables and seeded rollouts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .mdp import FiniteMdp, RewardTable

ACTIONS = ("up", "down", "left", "right", "stay")
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1), (0, 0))
CARDINAL = (0, 1, 2, 3)
STAY = 4


@dataclass(frozen=True)
class GridSpec:
    """Rectangular grid; cells are ``(row, col)`` and states are row-major.

    With probability ``slip_prob`` a cardinal move is replaced by a uniformly
    random cardinal move; "stay" never slips. Moves into walls or obstacle
    cells leave the agent where it is.
    """

    width: int
    height: int
    start: tuple = (0, 0)
    obstacle_cells: frozenset = field(default_factory=frozenset)
    slip_prob: float = 0.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be positive")
        object.__setattr__(self, "start", tuple(int(x) for x in self.start))
        obstacles = frozenset(tuple(int(x) for x in c) for c in self.obstacle_cells)
        object.__setattr__(self, "obstacle_cells", obstacles)
        for cell in (self.start, *obstacles):
            if not self.contains(cell):
                raise ValueError(f"cell {cell} lies outside the {self.height}x{self.width} grid")
        if self.start in obstacles:
            raise ValueError("start cell is inside an obstacle")
        if not 0.0 <= self.slip_prob < 0.5:
            raise ValueError("slip_prob must lie in [0, 0.5)")

    @property
    def num_states(self) -> int:
        return self.width * self.height

    def contains(self, cell) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def state(self, cell) -> int:
        return cell[0] * self.width + cell[1]

    def cell(self, state: int) -> tuple:
        return divmod(int(state), self.width)

    @property
    def start_state(self) -> int:
        return self.state(self.start)

    def step(self, cell, move) -> tuple:
        """Deterministic successor of ``cell`` under one move index."""
        dr, dc = MOVES[move]
        nxt = (cell[0] + dr, cell[1] + dc)
        if not self.contains(nxt) or nxt in self.obstacle_cells:
            return tuple(cell)
        return nxt

    def hazard_cells(self) -> frozenset:
        """Free cells 4-adjacent to an obstacle."""
        out = set()
        for cell in self.obstacle_cells:
            for move in CARDINAL:
                dr, dc = MOVES[move]
                nb = (cell[0] + dr, cell[1] + dc)
                if self.contains(nb) and nb not in self.obstacle_cells:
                    out.add(nb)
        return frozenset(out)

    def default_horizon(self) -> int:
        return 4 * (self.width + self.height)


@dataclass(frozen=True)
class LineGoalTask:
    axis: str
    target_index: int
    reward_style: str = "negative-distance"

    def __post_init__(self):
        if self.axis not in ("column", "row"):
            raise ValueError("axis must be 'column' or 'row'")
        if self.reward_style not in ("negative-distance", "goal-indicator"):
            raise ValueError("reward_style must be 'negative-distance' or 'goal-indicator'")

    def check(self, spec: GridSpec):
        extent = spec.width if self.axis == "column" else spec.height
        if not 0 <= self.target_index < extent:
            raise ValueError(f"{self.axis} {self.target_index} is outside the grid")

    def target(self) -> tuple:
        """(row, col) pair with ``None`` on the free coordinate."""
        return (None, self.target_index) if self.axis == "column" else (self.target_index, None)


@dataclass(frozen=True)
class Rollout:
    states: tuple
    actions: tuple
    total_reward: float
    rng_seed: int

    @property
    def final_state(self) -> int:
        return self.states[-1]


def build_grid_mdp(spec: GridSpec, discount: float) -> FiniteMdp:
    n = spec.num_states
    P = np.zeros((n, len(ACTIONS), n))
    slip = spec.slip_prob
    for s in range(n):
        cell = spec.cell(s)
        for a in range(len(ACTIONS)):
            if a == STAY:
                P[s, a, s] = 1.0
                continue
            P[s, a, spec.state(spec.step(cell, a))] += 1.0 - slip
            for other in CARDINAL:
                P[s, a, spec.state(spec.step(cell, other))] += slip / len(CARDINAL)
    return FiniteMdp(P, discount)


def line_reward(spec: GridSpec, task: LineGoalTask) -> RewardTable:
    """Action-independent reward depending only on one coordinate."""
    task.check(spec)
    extent = spec.width if task.axis == "column" else spec.height
    coord_axis = 1 if task.axis == "column" else 0
    values = np.zeros((spec.num_states, len(ACTIONS)))
    for s in range(spec.num_states):
        gap = abs(spec.cell(s)[coord_axis] - task.target_index)
        if task.reward_style == "goal-indicator":
            values[s] = 1.0 if gap == 0 else 0.0
        else:
            values[s] = -gap / (extent - 1) if extent > 1 else 0.0
    return RewardTable(values, 1.0)


def cell_distance(a, b) -> float:
    """Euclidean distance; ``None`` coordinates in ``b`` are ignored."""
    dr = 0.0 if b[0] is None else a[0] - b[0]
    dc = 0.0 if b[1] is None else a[1] - b[1]
    return math.hypot(dr, dc)


def _goal_shaping(spec: GridSpec, goal) -> np.ndarray:
    diag = math.hypot(spec.height - 1, spec.width - 1) or 1.0
    return np.array([-cell_distance(spec.cell(s), goal) / diag for s in range(spec.num_states)])


def goal_distance_reward(spec: GridSpec, goal) -> RewardTable:
    """Negative Euclidean distance to ``goal``, scaled into [-1, 0]."""
    if not spec.contains(goal):
        raise ValueError(f"goal {goal} lies outside the grid")
    shaping = _goal_shaping(spec, goal)
    return RewardTable(np.repeat(shaping[:, None], len(ACTIONS), axis=1), 1.0)


def obstacle_avoid_reward(spec: GridSpec, penalty: float, goal, discount: float = 0.0) -> RewardTable:
    """Goal shaping plus ``-penalty`` times the chance of entering a hazard cell.

    Hazard cells are the free cells next to an obstacle. ``discount`` is only
    used to build the dynamics and does not affect the table.
    """
    if not penalty > 0:
        raise ValueError("penalty must be > 0")
    if not spec.contains(goal):
        raise ValueError(f"goal {goal} lies outside the grid")
    P = build_grid_mdp(spec, discount).transition
    hazard = np.zeros(spec.num_states)
    for cell in spec.hazard_cells():
        hazard[spec.state(cell)] = 1.0
    values = _goal_shaping(spec, goal)[:, None] - penalty * (P @ hazard)
    return RewardTable(values, penalty + 1.0)


def rollout(mdp: FiniteMdp, policy, start: int, horizon: int, seed: int,
            reward: Optional[RewardTable] = None) -> Rollout:
    """Sample one trajectory of ``horizon`` transitions."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    probs = getattr(policy, "probs", policy)
    rng = np.random.default_rng(seed)
    action_cdf = np.cumsum(probs, axis=1)
    next_cdf = np.cumsum(mdp.transition, axis=2)
    s = int(start)
    states, actions = [s], []
    total = 0.0
    for _ in range(horizon):
        a = _draw(action_cdf[s], rng.random())
        if reward is not None:
            total += float(reward.values[s, a])
        s = _draw(next_cdf[s, a], rng.random())
        actions.append(a)
        states.append(s)
    return Rollout(tuple(states), tuple(actions), total, int(seed))


def _draw(cdf, u) -> int:
    # cdf[-1] may fall a hair below 1
    return min(int(np.searchsorted(cdf, u * cdf[-1], side="right")), len(cdf) - 1)


def rollouts(mdp: FiniteMdp, policy, start: int, horizon: int, seeds: Sequence[int],
             reward: Optional[RewardTable] = None) -> list:
    return [rollout(mdp, policy, start, horizon, seed, reward) for seed in seeds]


def final_distance_metric(batch: Sequence[Rollout], target, spec: GridSpec) -> tuple:
    """Mean and (population) std of the final cell's distance to ``target``.

    ``target`` is a ``(row, col)`` cell, or a pair with ``None`` on the
    free coordinate for a single line.
    """
    if not batch:
        raise ValueError("need at least one rollout")
    d = np.array([cell_distance(spec.cell(r.final_state), target) for r in batch])
    return float(d.mean()), float(d.std())


def hit_hazard(r: Rollout, spec: GridSpec) -> bool:
    hazard = {spec.state(c) for c in spec.hazard_cells()}
    return any(s in hazard for s in r.states)

