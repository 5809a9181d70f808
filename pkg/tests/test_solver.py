import math

import numpy as np
import pytest
from conftest import TOL, make_instance, single_state

from softcompose import oracle
from softcompose.mdp import FiniteMdp, RewardTable, random_mdp, random_reward
from softcompose.solver import (
    ConvergenceError,
    DivergenceError,
    QTable,
    StochasticPolicy,
    ValueTable,
    boltzmann_policy,
    default_max_iter,
    greedy_policy,
    hard_max_solve,
    residual_descent_solve,
    soft_backup,
    soft_policy_evaluation,
    soft_value,
    soft_values,
    solve_soft_q,
    stop_threshold,
)


def test_soft_value_two_equal_actions():
    assert soft_value(QTable([[0.0, 0.0]], 1.0), 0) == pytest.approx(math.log(2), abs=1e-15)


def test_soft_value_dominated_action():
    assert abs(soft_value(QTable([[5.0, -1000.0]], 1.0), 0) - 5.0) <= 1e-12


def test_soft_value_against_unshifted_decimal_sum():
    ref = oracle.direct_soft_value([1.0, 2.0, 3.0], 0.5)
    assert soft_value(QTable([[1.0, 2.0, 3.0]], 0.5), 0) == pytest.approx(ref, rel=1e-15)


def test_soft_value_survives_huge_q_over_alpha():
    v = soft_value(QTable([[800.0, 799.0]], 0.5), 0)
    assert v == pytest.approx(oracle.direct_soft_value([800.0, 799.0], 0.5), rel=1e-15)


def test_soft_value_state_range():
    with pytest.raises(IndexError):
        soft_value(QTable([[0.0]]), 1)


def test_soft_values_need_positive_temperature():
    with pytest.raises(ValueError):
        soft_values(QTable([[0.0]], 0.0))


def test_backup_with_zero_discount_is_reward():
    mdp, tasks = make_instance(0, discount=0.0)
    q = QTable(np.random.default_rng(0).normal(size=mdp.shape))
    assert np.array_equal(soft_backup(mdp, tasks[0], q).values, tasks[0].values)


def test_backup_single_action_uses_q_as_value():
    mdp, r = single_state(1.0, 0.5)
    assert soft_backup(mdp, r, QTable([[0.0]])).values[0, 0] == 1.0


def test_backup_matches_loop_oracle():
    mdp, tasks = make_instance(11, num_states=4, num_actions=3)
    q = QTable(np.zeros(mdp.shape), 0.7)
    for horizon in range(1, 6):
        q = soft_backup(mdp, tasks[0], q)
        ref = oracle.finite_horizon_soft_q(mdp, tasks[0], 0.7, horizon)
        assert np.max(np.abs(q.values - ref.astype(float))) <= 1e-13


def test_backup_shape_mismatch():
    mdp, tasks = make_instance(0)
    with pytest.raises(ValueError):
        soft_backup(mdp, tasks[0], QTable(np.zeros((1, 1))))


def test_solve_zero_discount():
    mdp, tasks = make_instance(2, discount=0.0)
    sol = solve_soft_q(mdp, tasks[0], 0.5)
    assert sol.diagnostics.iterations <= 2
    assert np.array_equal(sol.q.values, tasks[0].values)
    expected = boltzmann_policy(QTable(tasks[0].values, 0.5)).probs
    assert np.allclose(sol.policy.probs, expected, rtol=0, atol=1e-15)


def test_solve_single_state_geometric_series():
    mdp, r = single_state(1.0, 0.9)
    sol = solve_soft_q(mdp, r, 1.0)
    assert abs(sol.q.values[0, 0] - 10.0) <= TOL
    assert sol.value.values[0] == pytest.approx(sol.q.values[0, 0], abs=1e-15)


def test_solve_matches_finite_horizon_oracle():
    mdp, tasks = make_instance(5, num_states=3, num_actions=2, discount=0.9)
    sol = solve_soft_q(mdp, tasks[0], 1.0, TOL)
    bound = tasks[0].bound + math.log(2)
    h = oracle.HorizonConfig.for_tolerance(TOL, 0.9, bound).horizon
    ref = oracle.finite_horizon_soft_q(mdp, tasks[0], 1.0, h)
    assert np.max(np.abs(sol.q.values - ref.astype(float))) <= 2 * TOL


def test_diagnostics_and_contraction():
    mdp, tasks = make_instance(9, num_states=6, num_actions=3, discount=0.95)
    sol = solve_soft_q(mdp, tasks[1], 1.0, TOL)
    trace = np.array(sol.diagnostics.contraction_trace)
    assert len(trace) == sol.diagnostics.iterations
    assert np.all(trace >= 0)
    assert sol.diagnostics.final_residual <= TOL
    assert np.all(trace[1:] <= 0.95 * trace[:-1] + 1e-9)


def test_solve_reports_non_convergence():
    mdp, tasks = make_instance(0, discount=0.95)
    with pytest.raises(ConvergenceError) as info:
        solve_soft_q(mdp, tasks[0], 1.0, TOL, max_iter=3)
    assert info.value.diagnostics.iterations == 3


@pytest.mark.parametrize("kwargs", [{"temperature": 0.0}, {"temperature": -1.0}, {"tol": 0.0}])
def test_solve_rejects_bad_arguments(kwargs):
    mdp, tasks = make_instance(0)
    with pytest.raises(ValueError):
        solve_soft_q(mdp, tasks[0], **kwargs)


def test_boltzmann_consistency():
    mdp, tasks = make_instance(4, discount=0.9)
    sol = solve_soft_q(mdp, tasks[0], 0.3)
    lhs = 0.3 * sol.policy.log_probs
    rhs = sol.q.values - sol.value.values[:, None]
    assert np.max(np.abs(lhs - rhs)) <= 1e-10
    assert np.all(sol.policy.probs > 0)
    assert np.max(np.abs(np.exp(sol.policy.log_probs) - sol.policy.probs)) <= 1e-12


def test_evaluating_optimal_policy_returns_optimum():
    mdp, tasks = make_instance(6, discount=0.9)
    sol = solve_soft_q(mdp, tasks[0], 1.0, TOL)
    q_pi = soft_policy_evaluation(mdp, tasks[0], sol.policy, 1.0, TOL)
    assert np.max(np.abs(q_pi.values - sol.q.values)) <= 10 * TOL


def test_evaluation_with_zero_discount():
    mdp, tasks = make_instance(1, discount=0.0)
    uniform = StochasticPolicy.from_probs(np.full(mdp.shape, 1 / 3))
    assert np.array_equal(soft_policy_evaluation(mdp, tasks[0], uniform).values, tasks[0].values)


def test_evaluation_matches_dense_linear_solve():
    mdp, tasks = make_instance(8, num_states=4, num_actions=3, discount=0.9)
    uniform = StochasticPolicy.from_probs(np.full(mdp.shape, 1 / 3))
    q = soft_policy_evaluation(mdp, tasks[0], uniform, 1.0, TOL)
    ref = oracle.linear_solve_policy_eval(mdp, tasks[0], uniform.probs, 1.0)
    assert np.max(np.abs(q.values - ref.astype(float))) <= 10 * TOL


def test_evaluation_handles_deterministic_policies():
    mdp, tasks = make_instance(8, discount=0.9)
    onehot = greedy_policy(tasks[0].values)
    q = soft_policy_evaluation(mdp, tasks[0], onehot, 1.0, TOL)
    ref = oracle.linear_solve_policy_eval(mdp, tasks[0], onehot.probs, 1.0)
    assert np.max(np.abs(q.values - ref.astype(float))) <= 10 * TOL


def test_evaluation_shape_mismatch():
    mdp, tasks = make_instance(0)
    with pytest.raises(ValueError):
        soft_policy_evaluation(mdp, tasks[0], StochasticPolicy.from_probs([[1.0]]))


@pytest.mark.parametrize("seed", range(5))
def test_residual_descent_agrees_with_exact_iteration(seed):
    mdp, tasks = make_instance(seed, num_states=4, num_actions=3, discount=0.9)
    exact = solve_soft_q(mdp, tasks[0], 1.0, TOL)
    descent = residual_descent_solve(mdp, tasks[0], 1.0, 0.5, TOL)
    assert np.max(np.abs(descent.q.values - exact.q.values)) <= 100 * TOL


def test_residual_descent_one_sweep_when_target_is_constant():
    mdp, tasks = make_instance(0, discount=0.0)
    sol = residual_descent_solve(mdp, tasks[0], 1.0, step=1.0)
    assert sol.diagnostics.iterations == 1
    assert np.array_equal(sol.q.values, tasks[0].values)


def test_residual_descent_diverges_with_large_step():
    mdp, tasks = make_instance(0, discount=0.9)
    with pytest.raises(DivergenceError):
        residual_descent_solve(mdp, tasks[0], 1.0, step=2.5)


def test_residual_descent_rejects_bad_step():
    mdp, tasks = make_instance(0)
    with pytest.raises(ValueError):
        residual_descent_solve(mdp, tasks[0], step=0.0)


def test_hard_single_state():
    mdp, r = single_state([1.0, 0.0], 0.5)
    sol = hard_max_solve(mdp, r)
    assert np.allclose(sol.q.values, [[2.0, 1.0]], rtol=0, atol=TOL)
    assert np.array_equal(sol.policy.probs, [[1.0, 0.0]])
    assert sol.q.temperature == 0.0


def test_hard_tie_goes_to_lowest_index():
    mdp, r = single_state([1.0, 1.0], 0.5)
    assert np.array_equal(hard_max_solve(mdp, r).policy.probs, [[1.0, 0.0]])


def test_greedy_tie_tolerance():
    assert np.array_equal(greedy_policy([[1.0, 1.0 + 1e-12]]).probs, [[0.0, 1.0]])
    assert np.array_equal(greedy_policy([[1.0, 1.0 + 1e-12]], tie_tol=1e-10).probs, [[1.0, 0.0]])


@pytest.mark.parametrize("seed", range(5))
def test_hard_matches_low_temperature_soft(seed):
    mdp, tasks = make_instance(seed, num_states=5, num_actions=3, discount=0.9)
    alpha = 1e-4
    soft = solve_soft_q(mdp, tasks[0], alpha, TOL)
    hard = hard_max_solve(mdp, tasks[0], TOL)
    gap = np.max(np.abs(soft.q.values - hard.q.values))
    assert gap <= alpha * math.log(3) + 10 * TOL
    assert gap <= alpha * math.log(3) / (1 - 0.9) + 10 * TOL


def test_hard_reports_non_convergence():
    mdp, tasks = make_instance(0, discount=0.95)
    with pytest.raises(ConvergenceError):
        hard_max_solve(mdp, tasks[0], TOL, max_iter=2)


def test_policy_validation():
    with pytest.raises(ValueError):
        StochasticPolicy.from_probs([[0.5, 0.4]])
    with pytest.raises(ValueError):
        StochasticPolicy.from_probs([[1.5, -0.5]])
    with pytest.raises(ValueError):
        StochasticPolicy(np.ones((1, 1)), np.zeros((1, 2)))


def test_policy_entropy():
    p = StochasticPolicy.from_probs([[0.5, 0.5], [1.0, 0.0]])
    assert np.allclose(p.entropy(), [math.log(2), 0.0])


def test_tables_reject_non_finite():
    with pytest.raises(ValueError):
        QTable([[np.inf]])
    with pytest.raises(ValueError):
        ValueTable([np.nan])
    with pytest.raises(ValueError):
        QTable([[0.0]], -1.0)


def test_iteration_budget_helpers():
    assert stop_threshold(1e-10, 0.9) == pytest.approx(1e-11)
    assert default_max_iter(1e-10, 0.0, 1.0) == 18
    n = default_max_iter(1e-10, 0.9, 1.0)
    # the budget covers the a-priori error bound gamma^n * 2B / (1 - gamma)
    assert 0.9 ** (n - 16) * 2 / 0.1 <= 1e-10
    assert default_max_iter(1e-10, 0.9, 1.0, rate=1.0) == 1000


def test_solver_inputs_are_validated():
    bad = FiniteMdp([[[0.5]]], 0.9)
    with pytest.raises(ValueError):
        solve_soft_q(bad, RewardTable([[1.0]]))
    mdp = random_mdp(0, 2, 2, 0.5)
    with pytest.raises(ValueError):
        solve_soft_q(mdp, random_reward(0, random_mdp(0, 3, 2, 0.5)))
