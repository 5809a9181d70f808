import json

import numpy as np
import pytest
from conftest import make_instance

from softcompose.composition import certify
from softcompose.mdp import FiniteMdp, RewardTable, TaskSet
from softcompose.serialization import (
    certificate_to_doc,
    dumps,
    load_mdp,
    mdp_from_doc,
    mdp_to_doc,
    policy_from_doc,
    policy_to_doc,
    qtable_from_doc,
    qtable_to_doc,
    save_mdp,
    solution_to_doc,
)
from softcompose.solver import solve_soft_q


def test_mdp_round_trip_is_bit_exact(tmp_path):
    mdp, tasks = make_instance(17, num_states=5, num_actions=3, discount=0.95, sparsity=0.5)
    save_mdp(tmp_path / "m.json", mdp, tasks)
    mdp2, tasks2 = load_mdp(tmp_path / "m.json")
    assert mdp2.transition.tobytes() == mdp.transition.tobytes()
    assert mdp2.discount == mdp.discount
    assert tasks2.labels == tasks.labels
    for a, b in zip(tasks.rewards, tasks2.rewards):
        assert a.values.tobytes() == b.values.tobytes() and a.bound == b.bound


def test_document_fields():
    mdp, tasks = make_instance(0)
    doc = json.loads(dumps(mdp_to_doc(mdp, tasks)))
    assert {"num_states", "num_actions", "discount", "transition", "rewards"} <= set(doc)
    assert np.array(doc["transition"]).shape == (4, 3, 4)
    assert set(doc["rewards"]) == {"t0", "t1"}


def test_terminal_states_round_trip():
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = P[1, 0, 1] = 1.0
    mdp = FiniteMdp(P, 0.5, terminal_mask=[False, True])
    doc = json.loads(dumps(mdp_to_doc(mdp, TaskSet([RewardTable([[1.0], [0.0]])], ["r"]))))
    assert doc["terminal"] == [1]
    mdp2, _ = mdp_from_doc(doc)
    assert mdp2.terminal_states == [1]


def test_shape_mismatch_rejected():
    mdp, tasks = make_instance(0)
    doc = json.loads(dumps(mdp_to_doc(mdp, tasks)))
    doc["num_states"] = 5
    with pytest.raises(ValueError):
        mdp_from_doc(doc)


def test_tables_round_trip():
    mdp, tasks = make_instance(1)
    sol = solve_soft_q(mdp, tasks[0], 0.3)
    q = qtable_from_doc(json.loads(dumps(qtable_to_doc(sol.q))))
    assert q.values.tobytes() == sol.q.values.tobytes() and q.temperature == 0.3
    p = policy_from_doc(json.loads(dumps(policy_to_doc(sol.policy))))
    assert p.probs.tobytes() == sol.policy.probs.tobytes()
    doc = json.loads(dumps(solution_to_doc(sol)))
    assert doc["diagnostics"]["iterations"] == sol.diagnostics.iterations


def test_infinities_written_as_strings_and_nan_rejected():
    assert json.loads(dumps({"x": [np.inf, -np.inf, 1.5]})) == {"x": ["inf", "-inf", 1.5]}
    with pytest.raises(ValueError):
        dumps({"x": np.nan})


def test_dumps_is_canonical():
    assert dumps({"b": 1, "a": np.float64(0.1)}) == '{"a":0.1,"b":1}\n'


def test_certificate_document():
    mdp, tasks = make_instance(2)
    doc = json.loads(dumps(certificate_to_doc(certify(mdp, tasks, [0, 1]))))
    assert doc["summary"]["status"] == "valid"
    for name in ("c_star", "d_star", "lemma_upper_slack", "lemma_lower_slack", "theorem_slack",
                 "corollary_slack"):
        assert name in doc
    assert len(doc["corollary_slack"]) == mdp.num_states
