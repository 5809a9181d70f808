"""Additive composition of soft Q-functions and its sub-optimality bounds.

For two constituent tasks solved at temperature 1, the mean Q-function
``Q_sigma`` over-estimates the compound optimum ``Q*_C`` by at most ``C*``,
and the Boltzmann policy of ``Q_sigma`` loses at most ``D*`` against it:

    Q_sigma >= Q*_C >= Q_sigma - C*
    Q^{pi_sigma}_C >= Q*_C - D*

``C*`` and ``D*`` are fixed points of Bellman-style recursions driven by the
order-1/2 Renyi divergence between the constituent policies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .mdp import FiniteMdp, RewardTable, TaskSet, check_mdp, check_task_set
from .solver import (
    DEFAULT_TOL,
    ConvergenceError,
    QTable,
    StochasticPolicy,
    boltzmann_policy,
    default_max_iter,
    greedy_policy,
    soft_policy_evaluation,
    soft_values,
    solve_soft_q,
    stop_threshold,
)

SLACK_TOL = 1e-6
APPENDIX_FACTOR = 0.5
MAIN_TEXT_FACTOR = 1.0
_NORM_TOL = 1e-10
_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True, eq=False)
class ComposedTask:
    subset: tuple
    compound_reward: RewardTable
    q_sigma: QTable
    pi_sigma: StochasticPolicy


@dataclass(frozen=True, eq=False)
class BoundCertificate:
    """Bound constants and the slack of every inequality, entrywise.

    A slack is (larger side) - (smaller side), so a bound holds where the
    slack is >= 0. ``c_star_main`` is the constant from the recursion with
    divergence weight 1, which dominates ``c_star`` when the factor is 1/2.
    """

    subset: tuple
    divergence_factor: float
    c_star: np.ndarray
    c_star_main: np.ndarray
    d_star: np.ndarray
    q_sigma: np.ndarray
    q_compound: np.ndarray
    q_pi_sigma: np.ndarray
    lemma_upper_slack: np.ndarray
    lemma_lower_slack: np.ndarray
    theorem_slack: np.ndarray
    corollary_upper_slack: np.ndarray
    corollary_lower_slack: np.ndarray

    SLACK_FIELDS = ("lemma_upper_slack", "lemma_lower_slack", "theorem_slack",
                    "corollary_upper_slack", "corollary_lower_slack")

    @property
    def corollary_slack(self) -> np.ndarray:
        return np.minimum(self.corollary_upper_slack, self.corollary_lower_slack)

    @property
    def vacuous(self) -> bool:
        return bool(np.any(np.isinf(self.c_star)))

    def min_slacks(self) -> dict:
        return {name: float(np.min(getattr(self, name))) for name in self.SLACK_FIELDS}

    @property
    def valid(self) -> bool:
        return all(v >= -SLACK_TOL for v in self.min_slacks().values())

    @property
    def status(self) -> str:
        if not self.valid:
            return "failed"
        return "vacuous" if self.vacuous else "valid"

    def summary(self) -> dict:
        return {
            "subset": list(self.subset),
            "status": self.status,
            "valid": self.valid,
            "vacuous": self.vacuous,
            "divergence_factor": self.divergence_factor,
            "max_c_star": float(np.max(self.c_star)),
            "max_c_star_main": float(np.max(self.c_star_main)),
            "max_d_star": float(np.max(self.d_star)),
            "min_slack": self.min_slacks(),
        }


def renyi_half(p, q) -> float:
    """Order-1/2 Renyi divergence ``-2 ln sum sqrt(p q)``; ``inf`` for disjoint supports."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError("p and q must be 1-d arrays of equal length")
    for name, v in (("p", p), ("q", q)):
        if np.any(v < 0) or abs(v.sum() - 1.0) > _NORM_TOL:
            raise ValueError(f"{name} is not a probability vector")
    bc = float(np.sum(np.sqrt(p * q)))
    if bc == 0.0:
        return float("inf")
    return max(0.0, -2.0 * np.log(bc))


def policy_divergence(pi1: StochasticPolicy, pi2: StochasticPolicy) -> np.ndarray:
    """Per-state order-1/2 Renyi divergence, computed from log-probabilities."""
    if pi1.shape != pi2.shape:
        raise ValueError("policies must share a shape")
    with np.errstate(invalid="ignore"):
        half = 0.5 * (pi1.log_probs + pi2.log_probs)
    half = np.where(np.isnan(half), -np.inf, half)
    log_bc = logsumexp(half, axis=1)
    div = np.maximum(0.0, -2.0 * log_bc)
    # identical rows would otherwise pick up ~1e-16 of rounding
    same = np.all(pi1.log_probs == pi2.log_probs, axis=1)
    return np.where(same, 0.0, div)


def compose(mdp: FiniteMdp, tasks: TaskSet, subset: Sequence[int],
            constituent_solutions: Sequence) -> ComposedTask:
    """Average the constituent rewards and optimal soft Q-functions.

    ``constituent_solutions[i]`` belongs to ``tasks[subset[i]]`` and may be a
    ``SoftSolution`` or any ``(QTable, policy, ...)`` sequence.
    """
    subset = tuple(int(i) for i in subset)
    if not subset:
        raise ValueError("subset must be non-empty")
    if len(constituent_solutions) != len(subset):
        raise ValueError("need one constituent solution per subset entry")
    check_task_set(mdp, tasks)
    q_tables = [sol[0] for sol in constituent_solutions]
    temps = {q.temperature for q in q_tables}
    if len(temps) != 1:
        raise ValueError(f"constituents were solved at different temperatures: {sorted(temps)}")
    if any(q.shape != mdp.shape for q in q_tables):
        raise ValueError("constituent Q-table shape does not match the MDP")
    (alpha,) = temps
    k = len(subset)
    r_c = sum(tasks[i].values for i in subset) / k
    bound = sum(tasks[i].bound for i in subset) / k
    q_sigma = QTable(sum(q.values for q in q_tables) / k, alpha)
    pi_sigma = boltzmann_policy(q_sigma) if alpha > 0 else greedy_policy(q_sigma.values)
    return ComposedTask(subset, RewardTable(r_c, max(bound, float(np.max(np.abs(r_c))))), q_sigma, pi_sigma)


def hard_merge(q_tables: Sequence[QTable], tie_tol: float = DEFAULT_TOL) -> StochasticPolicy:
    """Greedy policy of the mean of hard-max Q-tables."""
    mean = sum(q.values for q in q_tables) / len(q_tables)
    return greedy_policy(mean, tie_tol=tie_tol)


def c_backup(mdp: FiniteMdp, source: np.ndarray, c: np.ndarray) -> np.ndarray:
    """C(s,a) <- gamma E_{s'}[source(s') + max_a' C(s',a')]."""
    return mdp.discount * (mdp.transition @ (source + c.max(axis=1)))


def _infinite_closure(mdp: FiniteMdp, bad_states: np.ndarray) -> np.ndarray:
    """(s, a) pairs that reach a ``bad_states`` state with positive probability."""
    reach = np.zeros(mdp.shape, dtype=bool)
    if not bad_states.any() or mdp.discount == 0.0:
        return reach
    positive = mdp.transition > 0
    state_bad = bad_states.copy()
    while True:
        reach = np.any(positive & state_bad[None, None, :], axis=2)
        new_bad = bad_states | reach.any(axis=1)
        if np.array_equal(new_bad, state_bad):
            return reach
        state_bad = new_bad


def _fixed_point(step, shape, tol, discount, max_iter, what):
    x = np.zeros(shape)
    threshold = stop_threshold(tol, discount)
    for _ in range(max_iter):
        new = step(x)
        change = float(np.max(np.abs(new - x)))
        x = new
        if change <= max(threshold, 4 * _EPS * float(np.max(np.abs(x), initial=0.0))):
            return x
    raise ConvergenceError(f"{what} recursion did not reach tol={tol} in {max_iter} iterations")


def compute_c_star(mdp: FiniteMdp, pi1: StochasticPolicy, pi2: StochasticPolicy,
                   divergence_factor: float = APPENDIX_FACTOR, tol: float = DEFAULT_TOL,
                   max_iter: Optional[int] = None) -> np.ndarray:
    """Fixed point of the divergence-driven max-Bellman recursion, from C = 0.

    Entries that can reach a state with infinite divergence are ``inf``.
    """
    check_mdp(mdp)
    if pi1.shape != mdp.shape or pi2.shape != mdp.shape:
        raise ValueError("policy shapes must match the MDP")
    source = divergence_factor * policy_divergence(pi1, pi2)
    inf_states = ~np.isfinite(source)
    inf_pairs = _infinite_closure(mdp, inf_states)
    finite_source = np.where(inf_states, 0.0, source)
    if max_iter is None:
        max_iter = default_max_iter(tol, mdp.discount, float(finite_source.max(initial=0.0)))
    c = _fixed_point(lambda x: c_backup(mdp, finite_source, x), mdp.shape, tol,
                     mdp.discount, max_iter, "C*")
    return np.where(inf_pairs, np.inf, c)


def compute_d_star(mdp: FiniteMdp, pi_sigma: StochasticPolicy, c_star: np.ndarray,
                   tol: float = DEFAULT_TOL, max_iter: Optional[int] = None) -> np.ndarray:
    """Fixed point of D(s,a) <- gamma E_{s'} E_{a'~pi_sigma}[C*(s',a') + D(s',a')]."""
    check_mdp(mdp)
    c_star = np.asarray(c_star, dtype=np.float64)
    if c_star.shape != mdp.shape:
        raise ValueError("c_star shape must match the MDP")
    if np.any(c_star < 0):
        raise ValueError("c_star must be non-negative")
    pi = pi_sigma.probs
    with np.errstate(invalid="ignore"):
        weighted = np.where(pi > 0, pi * c_star, 0.0)
    source = weighted.sum(axis=1)
    inf_states = ~np.isfinite(source)
    inf_pairs = _infinite_closure(mdp, inf_states)
    source = np.where(inf_states, 0.0, source)
    if max_iter is None:
        max_iter = default_max_iter(tol, mdp.discount, float(source.max(initial=0.0)))
    gamma, P = mdp.discount, mdp.transition
    d = _fixed_point(lambda x: gamma * (P @ (source + np.sum(pi * x, axis=1))), mdp.shape,
                     tol, gamma, max_iter, "D*")
    return np.where(inf_pairs, np.inf, d)


def certify(mdp: FiniteMdp, tasks: TaskSet, subset: Sequence[int], temperature: float = 1.0,
            tol: float = DEFAULT_TOL, divergence_factor: float = APPENDIX_FACTOR) -> BoundCertificate:
    """Solve, compose and check both bounds for a pair of tasks."""
    subset = tuple(int(i) for i in subset)
    if len(subset) != 2:
        raise ValueError(f"certificates are pairwise only, got a subset of size {len(subset)}")
    if temperature != 1.0:
        raise ValueError("certificates are only established at temperature 1")
    check_mdp(mdp)
    check_task_set(mdp, tasks)
    try:
        sols = [solve_soft_q(mdp, tasks[i], temperature, tol) for i in subset]
        composed = compose(mdp, tasks, subset, sols)
        direct = solve_soft_q(mdp, composed.compound_reward, temperature, tol)
        q_pi = soft_policy_evaluation(mdp, composed.compound_reward, composed.pi_sigma, temperature, tol)
    except ConvergenceError as exc:
        raise ConvergenceError(f"certifying subset {subset}: {exc}", exc.diagnostics) from exc

    pi1, pi2 = sols[0].policy, sols[1].policy
    # D* sums discounted C* values, amplifying C* error by 1 / (1 - gamma)
    c_tol = tol * (1.0 - mdp.discount)
    c_star = compute_c_star(mdp, pi1, pi2, divergence_factor, c_tol)
    c_main = compute_c_star(mdp, pi1, pi2, MAIN_TEXT_FACTOR, c_tol)
    d_star = compute_d_star(mdp, composed.pi_sigma, c_star, tol)

    q_sigma = composed.q_sigma.values
    q_c = direct.q.values
    v_sigma = soft_values(composed.q_sigma)
    v_c = direct.value.values
    return BoundCertificate(
        subset=subset,
        divergence_factor=float(divergence_factor),
        c_star=c_star,
        c_star_main=c_main,
        d_star=d_star,
        q_sigma=q_sigma,
        q_compound=q_c,
        q_pi_sigma=q_pi.values,
        lemma_upper_slack=q_sigma - q_c,
        lemma_lower_slack=q_c - (q_sigma - c_star),
        theorem_slack=q_pi.values - (q_c - d_star),
        corollary_upper_slack=v_sigma - v_c,
        corollary_lower_slack=v_c - (v_sigma - c_star.max(axis=1)),
    )
