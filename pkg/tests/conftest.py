import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from softcompose.mdp import FiniteMdp, RewardTable, TaskSet, random_mdp, random_reward

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TOL = 1e-10


def make_instance(seed, num_states=4, num_actions=3, discount=0.9, sparsity=1.0, num_tasks=2):
    mdp = random_mdp(seed, num_states, num_actions, discount, sparsity)
    tasks = TaskSet([random_reward(1000 * seed + i, mdp) for i in range(num_tasks)],
                    [f"t{i}" for i in range(num_tasks)])
    return mdp, tasks


def single_state(reward_row, discount):
    row = np.atleast_1d(np.asarray(reward_row, dtype=float))
    mdp = FiniteMdp(np.ones((1, row.size, 1)), discount)
    return mdp, RewardTable(row[None, :])


@pytest.fixture
def instance():
    return make_instance(3)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
