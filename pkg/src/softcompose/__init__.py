"""Soft Q-iteration, additive task composition and its sub-optimality bounds."""

__version__ = "0.1.0"

from .composition import BoundCertificate, ComposedTask, certify, compose, hard_merge
from .estimators import AdditiveComposition, HardQIteration, SoftQIteration, SoftResidualDescent
from .mdp import FiniteMdp, InvalidMdpError, RewardTable, TaskSet, random_mdp, random_reward
from .solver import (
    ConvergenceError,
    DivergenceError,
    QTable,
    StochasticPolicy,
    ValueTable,
    boltzmann_policy,
    hard_max_solve,
    residual_descent_solve,
    soft_policy_evaluation,
    solve_soft_q,
)

__all__ = [
    "AdditiveComposition",
    "BoundCertificate",
    "ComposedTask",
    "ConvergenceError",
    "DivergenceError",
    "FiniteMdp",
    "HardQIteration",
    "InvalidMdpError",
    "QTable",
    "RewardTable",
    "SoftQIteration",
    "SoftResidualDescent",
    "StochasticPolicy",
    "TaskSet",
    "ValueTable",
    "boltzmann_policy",
    "certify",
    "compose",
    "hard_max_solve",
    "hard_merge",
    "random_mdp",
    "random_reward",
    "residual_descent_solve",
    "soft_policy_evaluation",
    "solve_soft_q",
]
