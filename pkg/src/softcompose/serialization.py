"""JSON documents for MDPs, solver outputs and certificates.

Floats are written with ``repr`` precision, so every value round-trips
bit-exactly. Infinite entries (vacuous bound constants) are written as the
string ``"inf"``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .mdp import FiniteMdp, RewardTable, TaskSet
from .solver import QTable, SolveDiagnostics, StochasticPolicy, ValueTable

FORMAT_VERSION = 1


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [_plain(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if np.isnan(x):
            raise ValueError("NaN cannot be serialised")
        if np.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(doc) -> str:
    return json.dumps(_plain(doc), sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def write_json(path, doc):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc))


def read_json(path):
    return json.loads(Path(path).read_text())


def _array(values):
    def conv(x):
        if isinstance(x, list):
            return [conv(v) for v in x]
        if x == "inf":
            return np.inf
        if x == "-inf":
            return -np.inf
        return x
    return np.array(conv(values), dtype=np.float64)


def mdp_to_doc(mdp: FiniteMdp, tasks: TaskSet | None = None) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "discount": mdp.discount,
        "transition": mdp.transition,
        "rewards": {},
    }
    if mdp.terminal_states:
        doc["terminal"] = mdp.terminal_states
    if tasks is not None:
        doc["rewards"] = {label: r.values for label, r in zip(tasks.labels, tasks.rewards)}
        doc["reward_bounds"] = {label: r.bound for label, r in zip(tasks.labels, tasks.rewards)}
    return doc


def mdp_from_doc(doc: dict) -> tuple:
    P = _array(doc["transition"])
    expected = (doc["num_states"], doc["num_actions"], doc["num_states"])
    if P.shape != expected:
        raise ValueError(f"transition shape {P.shape} does not match declared sizes {expected}")
    mask = None
    if doc.get("terminal"):
        mask = np.zeros(doc["num_states"], dtype=bool)
        mask[list(doc["terminal"])] = True
    mdp = FiniteMdp(P, doc["discount"], mask)
    bounds = doc.get("reward_bounds", {})
    labels = sorted(doc.get("rewards", {}))
    rewards = [RewardTable(_array(doc["rewards"][k]), bounds.get(k)) for k in labels]
    return mdp, TaskSet(rewards, labels)


def save_mdp(path, mdp: FiniteMdp, tasks: TaskSet | None = None):
    write_json(path, mdp_to_doc(mdp, tasks))


def load_mdp(path) -> tuple:
    return mdp_from_doc(read_json(path))


def qtable_to_doc(q: QTable) -> dict:
    return {"kind": "qtable", "temperature": q.temperature, "values": q.values}


def qtable_from_doc(doc: dict) -> QTable:
    return QTable(_array(doc["values"]), doc["temperature"])


def policy_to_doc(policy: StochasticPolicy) -> dict:
    return {"kind": "policy", "probs": policy.probs, "log_probs": policy.log_probs}


def policy_from_doc(doc: dict) -> StochasticPolicy:
    return StochasticPolicy(_array(doc["probs"]), _array(doc["log_probs"]))


def value_to_doc(v: ValueTable) -> dict:
    return {"kind": "value", "values": v.values}


def diagnostics_to_doc(diag: SolveDiagnostics) -> dict:
    return {
        "iterations": diag.iterations,
        "final_residual": diag.final_residual,
        "contraction_trace": diag.contraction_trace,
    }


def solution_to_doc(solution) -> dict:
    return {
        "q": qtable_to_doc(solution.q),
        "value": value_to_doc(solution.value),
        "policy": policy_to_doc(solution.policy),
        "diagnostics": diagnostics_to_doc(solution.diagnostics),
    }


def certificate_to_doc(cert) -> dict:
    doc = {"kind": "certificate", "summary": cert.summary()}
    for name in ("c_star", "c_star_main", "d_star", "q_sigma", "q_compound", "q_pi_sigma",
                 *cert.SLACK_FIELDS):
        doc[name] = getattr(cert, name)
    doc["corollary_slack"] = cert.corollary_slack
    return doc
