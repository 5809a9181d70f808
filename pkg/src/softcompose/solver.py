"""Entropy-regularised dynamic programming on finite MDPs.

All fixed-point loops start from zero, measure progress in the sup-norm and
stop once the successive-iterate change certifies that the iterate is within
``tol`` of the fixed point (change <= tol * (1 - gamma)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import logsumexp

from .mdp import FiniteMdp, RewardTable, check_mdp, check_reward

DEFAULT_TOL = 1e-10
DIVERGENCE_PATIENCE = 50
_EPS = np.finfo(np.float64).eps


class ConvergenceError(RuntimeError):
    """A fixed-point loop exhausted ``max_iter``; carries the diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class DivergenceError(ConvergenceError):
    pass


@dataclass(frozen=True, eq=False)
class QTable:
    """Action values with the temperature they were computed at.

    ``temperature == 0`` marks a hard-max (greedy) table.
    """

    values: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        q = np.array(self.values, dtype=np.float64, copy=True)
        if q.ndim != 2:
            raise ValueError(f"Q-table must be 2-d, got shape {q.shape}")
        if not np.all(np.isfinite(q)):
            raise ValueError("Q-table has non-finite entries")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        q.setflags(write=False)
        object.__setattr__(self, "values", q)
        object.__setattr__(self, "temperature", float(self.temperature))

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class ValueTable:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ValueError("value table must be a finite vector")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class StochasticPolicy:
    """Row-stochastic action distribution per state.

    Keeps both probabilities and log-probabilities; at small temperatures
    probabilities of poor actions underflow to 0 while the log stays finite.
    """

    probs: np.ndarray
    log_probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64, copy=True)
        lp = np.array(self.log_probs, dtype=np.float64, copy=True)
        if p.ndim != 2 or p.shape != lp.shape:
            raise ValueError("probs and log_probs must be matching 2-d arrays")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("policy rows must be non-negative and sum to 1")
        p.setflags(write=False)
        lp.setflags(write=False)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "log_probs", lp)

    @classmethod
    def from_probs(cls, probs) -> "StochasticPolicy":
        probs = np.asarray(probs, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            return cls(probs, np.log(probs))

    @classmethod
    def from_log_probs(cls, log_probs) -> "StochasticPolicy":
        log_probs = np.asarray(log_probs, dtype=np.float64)
        return cls(np.exp(log_probs), log_probs)

    @property
    def shape(self):
        return self.probs.shape

    def entropy(self) -> np.ndarray:
        """Per-state Shannon entropy, with 0 log 0 taken as 0."""
        return -np.sum(_plogp(self.probs, self.log_probs), axis=1)


@dataclass
class SolveDiagnostics:
    iterations: int
    final_residual: float
    contraction_trace: list = field(default_factory=list)


class SoftSolution(NamedTuple):
    q: QTable
    value: ValueTable
    policy: StochasticPolicy
    diagnostics: SolveDiagnostics


class HardSolution(NamedTuple):
    q: QTable
    policy: StochasticPolicy
    diagnostics: SolveDiagnostics


class DescentSolution(NamedTuple):
    q: QTable
    diagnostics: SolveDiagnostics


def _plogp(p, logp):
    return np.where(p > 0, p * np.where(p > 0, logp, 0.0), 0.0)


def _check_temperature(temperature):
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature!r}")


def _check_tol(tol):
    if not tol > 0:
        raise ValueError(f"tol must be > 0, got {tol!r}")


def stop_threshold(tol: float, discount: float) -> float:
    """Successive-change threshold that guarantees sup-norm error <= tol."""
    return tol * (1.0 - discount)


def default_max_iter(tol: float, discount: float, bound: float, rate: Optional[float] = None) -> int:
    """Iterations for a ``rate``-contraction from zero to reach ``tol``.

    ``bound`` is the per-step magnitude (reward bound plus any entropy bonus).
    """
    rate = discount if rate is None else rate
    if rate <= 0.0:
        return 2 + 16
    if rate >= 1.0:
        return 1000
    bound = max(bound, tol)
    horizon = math.log(tol * (1.0 - discount) / (2.0 * bound)) / math.log(rate)
    return max(1, math.ceil(horizon)) + 16


def soft_values(q: QTable) -> np.ndarray:
    """Soft maximum over actions for every state, in max-shifted form."""
    alpha = q.temperature
    _check_temperature(alpha)
    m = q.values.max(axis=1)
    return m + alpha * np.log(np.sum(np.exp((q.values - m[:, None]) / alpha), axis=1))


def soft_value(q: QTable, state: int) -> float:
    n = q.values.shape[0]
    if not 0 <= state < n:
        raise IndexError(f"state {state} out of range for {n} states")
    return float(soft_values(QTable(q.values[state:state + 1], q.temperature))[0])


def boltzmann_policy(q: QTable) -> StochasticPolicy:
    """pi(a|s) = exp((Q(s,a) - V(s)) / alpha)."""
    v = soft_values(q)
    return StochasticPolicy.from_log_probs((q.values - v[:, None]) / q.temperature)


def greedy_policy(q_values, tie_tol: float = 0.0) -> StochasticPolicy:
    """One-hot policy on the lowest-index action within ``tie_tol`` of the row max."""
    q_values = np.asarray(q_values, dtype=np.float64)
    near_max = q_values >= q_values.max(axis=1, keepdims=True) - tie_tol
    best = np.argmax(near_max, axis=1)
    probs = np.zeros_like(q_values)
    probs[np.arange(q_values.shape[0]), best] = 1.0
    return StochasticPolicy.from_probs(probs)


def soft_backup(mdp: FiniteMdp, reward: RewardTable, q: QTable) -> QTable:
    """One application of the soft Bellman operator."""
    if q.shape != mdp.shape or reward.shape != mdp.shape:
        raise ValueError("Q-table, reward and MDP shapes disagree")
    new = reward.values + mdp.discount * (mdp.transition @ soft_values(q))
    return QTable(new, q.temperature)


def _soft_value_increment(log_pi, delta, alpha):
    """V(Q + delta) - V(Q) given log-softmax of Q, accurate relative to |delta|."""
    x = delta / alpha
    small = np.max(np.abs(x), axis=1) <= 0.5
    out = np.empty(x.shape[0])
    if np.any(small):
        pi = np.exp(log_pi[small])
        out[small] = alpha * np.log1p(np.sum(pi * np.expm1(x[small]), axis=1))
    if not np.all(small):
        big = ~small
        out[big] = alpha * logsumexp(log_pi[big] + x[big], axis=1)
    return out


def solve_soft_q(mdp: FiniteMdp, reward: RewardTable, temperature: float = 1.0,
                 tol: float = DEFAULT_TOL, max_iter: Optional[int] = None) -> SoftSolution:
    """Iterate the soft Bellman backup from Q = 0 to its fixed point.

    Iterates are advanced by their exact increments,
    ``Q_{k+1} - Q_k = gamma * P [V(Q_k) - V(Q_{k-1})]``, so the residual trace
    keeps full relative precision all the way down to ``tol``.
    """
    check_mdp(mdp)
    check_reward(mdp, reward)
    _check_temperature(temperature)
    _check_tol(tol)
    gamma = mdp.discount
    bound = reward.bound + temperature * math.log(mdp.num_actions)
    if max_iter is None:
        max_iter = default_max_iter(tol, gamma, bound)
    threshold = stop_threshold(tol, gamma)
    P = mdp.transition

    q_prev = np.zeros(mdp.shape)
    delta = soft_backup(mdp, reward, QTable(q_prev, temperature)).values
    q = q_prev + delta
    residual = float(np.max(np.abs(delta)))
    trace = [residual]
    iterations = 1
    while residual > threshold:
        if iterations >= max_iter:
            diag = SolveDiagnostics(iterations, residual, trace)
            raise ConvergenceError(
                f"soft Q-iteration did not reach tol={tol} in {max_iter} iterations "
                f"(residual {residual:.3e})", diag)
        prev_vals = soft_values(QTable(q_prev, temperature))
        log_pi = (q_prev - prev_vals[:, None]) / temperature
        delta = gamma * (P @ _soft_value_increment(log_pi, delta, temperature))
        q_prev, q = q, q + delta
        residual = float(np.max(np.abs(delta)))
        trace.append(residual)
        iterations += 1

    q_table = QTable(q, temperature)
    value = ValueTable(soft_values(q_table))
    diag = SolveDiagnostics(iterations, residual, trace)
    return SoftSolution(q_table, value, boltzmann_policy(q_table), diag)


def soft_policy_evaluation(mdp: FiniteMdp, reward: RewardTable, policy: StochasticPolicy,
                           temperature: float = 1.0, tol: float = DEFAULT_TOL,
                           max_iter: Optional[int] = None) -> QTable:
    """Entropy-augmented action values of following ``policy``.

    Fixed point of Q <- r + gamma E_{s'} E_{a'~pi}[Q(s', a') - alpha log pi(a'|s')].
    """
    check_mdp(mdp)
    check_reward(mdp, reward)
    _check_temperature(temperature)
    _check_tol(tol)
    if policy.shape != mdp.shape:
        raise ValueError("policy shape does not match MDP")
    gamma = mdp.discount
    pi = policy.probs
    bonus = -temperature * np.sum(_plogp(pi, policy.log_probs), axis=1)
    if max_iter is None:
        max_iter = default_max_iter(tol, gamma, reward.bound + float(bonus.max(initial=0.0)))
    threshold = stop_threshold(tol, gamma)
    P = mdp.transition

    # the operator is affine, so increments propagate linearly
    delta = reward.values + gamma * (P @ bonus)
    q = delta.copy()
    residual = float(np.max(np.abs(delta)))
    iterations = 1
    while residual > threshold:
        if iterations >= max_iter:
            raise ConvergenceError(
                f"soft policy evaluation did not reach tol={tol} in {max_iter} iterations",
                SolveDiagnostics(iterations, residual))
        delta = gamma * (P @ np.sum(pi * delta, axis=1))
        q = q + delta
        residual = float(np.max(np.abs(delta)))
        iterations += 1
    return QTable(q, temperature)


def residual_descent_solve(mdp: FiniteMdp, reward: RewardTable, temperature: float = 1.0,
                           step: float = 0.5, tol: float = DEFAULT_TOL,
                           max_iter: Optional[int] = None) -> DescentSolution:
    """Semi-gradient descent on the squared soft Bellman residual.

    Each sweep freezes the target y = r + gamma P V(Q) and takes a gradient
    step on 0.5 * sum (Q - y)^2, i.e. Q <- Q - step * (Q - y). Stops when the
    sup-norm residual |Q - y| drops to ``tol``.
    """
    check_mdp(mdp)
    check_reward(mdp, reward)
    _check_temperature(temperature)
    _check_tol(tol)
    if not step > 0:
        raise ValueError("step must be > 0")
    gamma = mdp.discount
    if max_iter is None:
        rate = abs(1.0 - step) + step * gamma
        bound = reward.bound + temperature * math.log(mdp.num_actions)
        max_iter = default_max_iter(tol, gamma, bound, rate=rate)

    q = QTable(np.zeros(mdp.shape), temperature)
    trace = []
    growing = 0
    sweeps = 0
    while True:
        target = soft_backup(mdp, reward, q).values
        gap = q.values - target
        residual = float(np.max(np.abs(gap)))
        if trace:
            growing = growing + 1 if residual > trace[-1] else 0
        trace.append(residual)
        diag = SolveDiagnostics(sweeps, residual, trace)
        if residual <= tol:
            return DescentSolution(q, diag)
        if growing >= DIVERGENCE_PATIENCE or not np.isfinite(residual):
            raise DivergenceError(
                f"residual descent diverged with step={step} (residual {residual:.3e} "
                f"after {sweeps} sweeps)", diag)
        if sweeps >= max_iter:
            raise ConvergenceError(
                f"residual descent did not reach tol={tol} in {max_iter} sweeps", diag)
        q = QTable(q.values - step * gap, temperature)
        sweeps += 1


def hard_max_solve(mdp: FiniteMdp, reward: RewardTable, tol: float = DEFAULT_TOL,
                   max_iter: Optional[int] = None) -> HardSolution:
    """Standard value iteration (the zero-temperature limit).

    The returned policy is greedy with ties resolved to the lowest action
    index; values within ``tol`` of the row maximum count as ties.
    """
    check_mdp(mdp)
    check_reward(mdp, reward)
    _check_tol(tol)
    gamma = mdp.discount
    if max_iter is None:
        max_iter = default_max_iter(tol, gamma, reward.bound)
    threshold = stop_threshold(tol, gamma)
    P = mdp.transition
    r = reward.values

    q = r.copy()
    residual = float(np.max(np.abs(q)))
    trace = [residual]
    iterations = 1
    floor = 0.0
    while residual > max(threshold, floor):
        if iterations >= max_iter:
            raise ConvergenceError(
                f"value iteration did not reach tol={tol} in {max_iter} iterations",
                SolveDiagnostics(iterations, residual, trace))
        new = r + gamma * (P @ q.max(axis=1))
        residual = float(np.max(np.abs(new - q)))
        # below this, sweeps only shuffle rounding error
        floor = 4 * _EPS * float(np.max(np.abs(new)))
        q = new
        trace.append(residual)
        iterations += 1
    q_table = QTable(q, 0.0)
    return HardSolution(q_table, greedy_policy(q, tie_tol=tol), SolveDiagnostics(iterations, residual, trace))
