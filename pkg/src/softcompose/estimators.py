"""Estimator-style wrappers around the solvers.

``fit(mdp, reward)`` solves the MDP; ``predict_proba(states)`` returns policy
rows and ``predict(states)`` the most probable action. Hyper-parameters are
plain constructor arguments, so ``get_params``/``set_params``/``clone`` work
as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import composition, solver
from .mdp import FiniteMdp, RewardTable, TaskSet, check_mdp, check_reward


def check_states(states, num_states: int) -> np.ndarray:
    """Coerce a state index or sequence of indices into a validated int array."""
    states = np.atleast_1d(np.asarray(states))
    if states.ndim != 1:
        raise ValueError("states must be a scalar or a 1-d sequence of indices")
    if states.size and not np.issubdtype(states.dtype, np.integer):
        if not np.all(np.equal(np.mod(states, 1), 0)):
            raise ValueError("states must be integer indices")
        states = states.astype(np.int64)
    if np.any((states < 0) | (states >= num_states)):
        raise ValueError(f"state index out of range for {num_states} states")
    return states.astype(np.int64)


def _check_inputs(mdp, reward):
    if not isinstance(mdp, FiniteMdp):
        raise TypeError(f"expected a FiniteMdp, got {type(mdp).__name__}")
    if not isinstance(reward, RewardTable):
        reward = RewardTable(reward)
    check_mdp(mdp)
    check_reward(mdp, reward)
    return mdp, reward


class _PolicyMixin:
    def predict_proba(self, states):
        check_is_fitted(self, "policy_")
        return self.policy_.probs[check_states(states, self.policy_.shape[0])]

    def predict(self, states):
        return np.argmax(self.predict_proba(states), axis=1)

    def sample(self, states, random_state=None):
        rng = np.random.default_rng(random_state)
        probs = self.predict_proba(states)
        return np.array([rng.choice(len(p), p=p / p.sum()) for p in probs])


class SoftQIteration(_PolicyMixin, BaseEstimator):
    """Exact soft Q-iteration.

    Fitted attributes: ``q_``, ``value_``, ``policy_``, ``diagnostics_`` and
    ``n_iter_``.
    """

    def __init__(self, temperature=1.0, tol=solver.DEFAULT_TOL, max_iter=None):
        self.temperature = temperature
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, mdp, reward):
        mdp, reward = _check_inputs(mdp, reward)
        sol = solver.solve_soft_q(mdp, reward, self.temperature, self.tol, self.max_iter)
        self.q_, self.value_, self.policy_, self.diagnostics_ = sol
        self.n_iter_ = sol.diagnostics.iterations
        return self

    def value(self, states):
        check_is_fitted(self, "value_")
        return self.value_.values[check_states(states, self.value_.values.shape[0])]

    def evaluate(self, mdp, reward, policy=None):
        """Soft action values of ``policy`` (default: the fitted one) under ``reward``."""
        check_is_fitted(self, "policy_")
        mdp, reward = _check_inputs(mdp, reward)
        policy = self.policy_ if policy is None else policy
        return solver.soft_policy_evaluation(mdp, reward, policy, self.temperature, self.tol)


class SoftResidualDescent(_PolicyMixin, BaseEstimator):
    """Semi-gradient descent on the squared soft Bellman residual."""

    def __init__(self, temperature=1.0, step=0.5, tol=solver.DEFAULT_TOL, max_iter=None):
        self.temperature = temperature
        self.step = step
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, mdp, reward):
        mdp, reward = _check_inputs(mdp, reward)
        sol = solver.residual_descent_solve(mdp, reward, self.temperature, self.step,
                                            self.tol, self.max_iter)
        self.q_ = sol.q
        self.diagnostics_ = sol.diagnostics
        self.n_iter_ = sol.diagnostics.iterations
        self.policy_ = solver.boltzmann_policy(sol.q)
        return self


class HardQIteration(_PolicyMixin, BaseEstimator):
    """Plain value iteration with a greedy, lowest-index tie-broken policy."""

    def __init__(self, tol=solver.DEFAULT_TOL, max_iter=None):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, mdp, reward):
        mdp, reward = _check_inputs(mdp, reward)
        sol = solver.hard_max_solve(mdp, reward, self.tol, self.max_iter)
        self.q_, self.policy_, self.diagnostics_ = sol
        self.n_iter_ = sol.diagnostics.iterations
        return self


class AdditiveComposition(_PolicyMixin, BaseEstimator):
    """Solve each task in ``subset`` once, then act on the mean Q-function.

    With ``soft=False`` the constituents are solved by value iteration and
    the merged policy is greedy in the mean hard Q-function.
    """

    def __init__(self, subset=(0, 1), temperature=1.0, tol=solver.DEFAULT_TOL, soft=True):
        self.subset = subset
        self.temperature = temperature
        self.tol = tol
        self.soft = soft

    def fit(self, mdp, tasks):
        if not isinstance(tasks, TaskSet):
            tasks = TaskSet(tasks)
        check_mdp(mdp)
        subset = tuple(self.subset)
        if self.soft:
            self.constituents_ = [solver.solve_soft_q(mdp, tasks[i], self.temperature, self.tol)
                                  for i in subset]
            composed = composition.compose(mdp, tasks, subset, self.constituents_)
            self.q_ = composed.q_sigma
            self.policy_ = composed.pi_sigma
            self.compound_reward_ = composed.compound_reward
        else:
            self.constituents_ = [solver.hard_max_solve(mdp, tasks[i], self.tol) for i in subset]
            q_tables = [sol.q for sol in self.constituents_]
            self.q_ = solver.QTable(sum(q.values for q in q_tables) / len(q_tables), 0.0)
            self.policy_ = composition.hard_merge(q_tables, tie_tol=self.tol)
            self.compound_reward_ = RewardTable(sum(tasks[i].values for i in subset) / len(subset))
        self.n_constituent_iter_ = sum(sol.diagnostics.iterations for sol in self.constituents_)
        return self
