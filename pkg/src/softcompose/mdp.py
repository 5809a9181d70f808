"""Finite MDPs, reward tables and seeded instance generators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

ROW_SUM_TOL = 1e-12


class InvalidMdpError(ValueError):
    """Raised when an MDP or reward table violates its invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Dense tabular MDP.

    ``transition[s, a, s']`` is the probability of landing in ``s'`` after
    taking ``a`` in ``s``. Terminal states are absorbing self-loops.
    Construction only checks shapes; use :func:`validate_mdp` for the
    probabilistic invariants.
    """

    transition: np.ndarray
    discount: float
    terminal_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        P = _frozen(self.transition)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or P.shape[0] < 1 or P.shape[1] < 1:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "discount", float(self.discount))
        if self.terminal_mask is not None:
            mask = _frozen(self.terminal_mask, dtype=bool)
            if mask.shape != (P.shape[0],):
                raise ValueError("terminal_mask must have one entry per state")
            object.__setattr__(self, "terminal_mask", mask)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def shape(self) -> tuple:
        return (self.num_states, self.num_actions)

    @property
    def terminal_states(self) -> list:
        if self.terminal_mask is None:
            return []
        return [int(s) for s in np.flatnonzero(self.terminal_mask)]


@dataclass(frozen=True, eq=False)
class RewardTable:
    values: np.ndarray
    bound: Optional[float] = None

    def __post_init__(self):
        r = _frozen(self.values)
        if r.ndim != 2:
            raise ValueError(f"reward table must be 2-d (S, A), got shape {r.shape}")
        if not np.all(np.isfinite(r)):
            raise ValueError("reward table has non-finite entries")
        observed = float(np.max(np.abs(r))) if r.size else 0.0
        bound = observed if self.bound is None else float(self.bound)
        if observed > bound:
            raise ValueError(f"reward magnitude {observed} exceeds declared bound {bound}")
        object.__setattr__(self, "values", r)
        object.__setattr__(self, "bound", bound)

    @property
    def shape(self) -> tuple:
        return self.values.shape


@dataclass(frozen=True, eq=False)
class TaskSet:
    rewards: tuple
    labels: tuple = field(default=())

    def __post_init__(self):
        rewards = tuple(self.rewards)
        labels = tuple(self.labels) or tuple(f"task{i}" for i in range(len(rewards)))
        if len(labels) != len(rewards):
            raise ValueError("need exactly one label per reward table")
        if len(set(labels)) != len(labels):
            raise ValueError("task labels must be unique")
        if rewards and len({r.shape for r in rewards}) != 1:
            raise ValueError("all reward tables in a task set must share one shape")
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.rewards)

    def __getitem__(self, key) -> RewardTable:
        if isinstance(key, str):
            return self.rewards[self.labels.index(key)]
        return self.rewards[key]

    def index(self, label: str) -> int:
        return self.labels.index(label)


def validate_mdp(mdp: FiniteMdp) -> list:
    """Return a list of human-readable invariant violations (empty if valid)."""
    violations = []
    P = mdp.transition
    if not np.all(np.isfinite(P)):
        violations.append("transition tensor has non-finite entries")
    for s, a, s_next in zip(*np.nonzero(P < 0)):
        violations.append(f"negative probability {float(P[s, a, s_next])!r} "
                          f"at (s={s},a={a},s'={s_next})")
    sums = P.sum(axis=2)
    for s, a in zip(*np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)):
        violations.append(f"row sum {float(sums[s, a])!r} at (s={s},a={a})")
    if not (0.0 <= mdp.discount < 1.0):
        violations.append(f"discount must be < 1 and >= 0, got {mdp.discount!r}")
    for s in mdp.terminal_states:
        for a in range(mdp.num_actions):
            if P[s, a, s] != 1.0:
                violations.append(f"terminal state {s} is not absorbing under action {a}")
    return violations


def check_mdp(mdp: FiniteMdp) -> FiniteMdp:
    violations = validate_mdp(mdp)
    if violations:
        raise InvalidMdpError(violations)
    return mdp


def check_reward(mdp: FiniteMdp, reward: RewardTable) -> RewardTable:
    if reward.shape != mdp.shape:
        raise InvalidMdpError([f"reward shape {reward.shape} does not match MDP shape {mdp.shape}"])
    bad = [s for s in mdp.terminal_states if np.any(reward.values[s] != 0.0)]
    if bad:
        raise InvalidMdpError([f"terminal state {s} has non-zero reward" for s in bad])
    return reward


def check_task_set(mdp: FiniteMdp, tasks: TaskSet) -> TaskSet:
    for r in tasks.rewards:
        check_reward(mdp, r)
    return tasks


def random_mdp(seed: int, num_states: int, num_actions: int, discount: float,
               sparsity: float = 1.0) -> FiniteMdp:
    """Draw a random MDP whose successor distributions are normalised uniforms.

    Each successor is kept with probability ``sparsity``; a row that would
    end up empty keeps one uniformly chosen successor.
    """
    if num_states < 1 or num_actions < 1:
        raise ValueError("num_states and num_actions must be positive")
    if not 0.0 < sparsity <= 1.0:
        raise ValueError("sparsity must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    weights = rng.uniform(1e-3, 1.0, size=(num_states, num_actions, num_states))
    keep = rng.random(size=weights.shape) < sparsity
    forced = rng.integers(num_states, size=(num_states, num_actions))
    empty = ~keep.any(axis=2)
    keep[empty, forced[empty]] = True
    weights = np.where(keep, weights, 0.0)
    P = weights / weights.sum(axis=2, keepdims=True)
    # push the leftover rounding onto the largest entry so rows sum to 1
    resid = 1.0 - P.sum(axis=2)
    idx = P.argmax(axis=2)
    s_idx, a_idx = np.indices(idx.shape)
    P[s_idx, a_idx, idx] += resid
    return FiniteMdp(P, discount)


def random_reward(seed: int, mdp: FiniteMdp, bound: float = 1.0) -> RewardTable:
    if bound <= 0:
        raise ValueError("bound must be positive")
    rng = np.random.default_rng(seed)
    values = rng.uniform(-bound, bound, size=mdp.shape)
    for s in mdp.terminal_states:
        values[s] = 0.0
    return RewardTable(values, bound)


def derive_seed(*keys: int) -> int:
    """Deterministically mix integer keys into one 32-bit seed."""
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])

