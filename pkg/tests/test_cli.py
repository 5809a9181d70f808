import csv
import dataclasses
import json

import jsonschema
import numpy as np
import pytest

from softcompose import cli, composition, harness
from softcompose.mdp import FiniteMdp, RewardTable, TaskSet
from softcompose.serialization import read_json, save_mdp
from softcompose.solver import solve_soft_q

SMALL_GRID = {
    "version": 1,
    "mdp": {"grid": {"width": 4, "height": 4, "obstacles": [[1, 1]]}, "discount": 0.9},
    "tasks": [
        {"label": "col3", "line": {"axis": "column", "target": 3}},
        {"label": "row3", "line": {"axis": "row", "target": 3}},
    ],
    "temperature": 0.1,
    "seeds": [0, 1, 2],
}

RANDOM = {
    "version": 1,
    "mdp": {"random": {"num_states": [2, 4], "num_actions": 2, "discount": [0.5, 0.9]}},
    "tasks": [{"label": "a", "random": {}}, {"label": "b", "random": {"bound": 2.0}}],
    "seeds": {"start": 0, "count": 4},
}


def write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def run(*args):
    return cli.main([str(a) for a in args])


def files(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_solve_single_state_file(tmp_path):
    mdp = FiniteMdp(np.ones((1, 1, 1)), 0.9)
    save_mdp(tmp_path / "one.json", mdp, TaskSet([RewardTable([[2.0]])], ["r"]))
    cfg = write(tmp_path, {"version": 1, "mdp": {"file": "one.json"}, "seeds": [0]})
    assert run("solve", "--config", cfg, "--out", tmp_path / "o") == 0
    q = read_json(tmp_path / "o/solve/seed-0/r.json")["q"]["values"]
    assert q[0][0] == pytest.approx(2.0 / (1 - 0.9), abs=1e-10)


def test_solve_is_byte_identical_across_runs(tmp_path):
    cfg = write(tmp_path, SMALL_GRID)
    assert run("solve", "--config", cfg, "--out", tmp_path / "a") == 0
    assert run("solve", "--config", cfg, "--out", tmp_path / "b") == 0
    assert files(tmp_path / "a") == files(tmp_path / "b")
    assert len(files(tmp_path / "a")) == 3 * 2


def test_solve_outputs_pass_solver_checks(tmp_path):
    config = harness.load_config(SMALL_GRID)
    status, summary = harness.run("solve", config, tmp_path)
    assert status == 0 and summary["violations"] == []
    inst = harness.build_instance(config, 0)
    doc = read_json(tmp_path / "solve/seed-0/col3.json")
    sol = solve_soft_q(inst.mdp, inst.tasks["col3"], 0.1)
    assert np.array_equal(np.array(doc["q"]["values"]), sol.q.values)


def test_certify_identical_fixture(tmp_path, capsys):
    assert run("certify", "--config", "fixture:identical", "--out", tmp_path) == 0
    summary = read_json(tmp_path / "certify/summary.json")
    assert summary["counts"] == {"valid": 10, "vacuous": 0, "failed": 0}
    for entry in summary["certificates"]:
        assert entry["max_c_star"] == 0.0
        assert all(abs(v) <= 1e-8 for v in entry["min_slack"].values())
    assert "10 valid" in capsys.readouterr().out


def test_certify_rejects_three_task_subsets(tmp_path, capsys):
    doc = dict(RANDOM, tasks=RANDOM["tasks"] + [{"label": "c", "random": {}}], subsets=[["a", "b", "c"]])
    assert run("certify", "--config", write(tmp_path, doc), "--out", tmp_path) == 2
    assert "pairwise only" in capsys.readouterr().err


def test_certify_exit_status_tracks_slack(tmp_path, monkeypatch):
    real = composition.certify

    def broken(*args, **kwargs):
        cert = real(*args, **kwargs)
        return dataclasses.replace(cert, theorem_slack=np.minimum(cert.theorem_slack, -2e-6))

    config = harness.load_config(RANDOM)
    assert harness.run("certify", config, tmp_path / "ok")[0] == 0
    monkeypatch.setattr(harness.composition, "certify", broken)
    status, summary = harness.run("certify", config, tmp_path / "bad")
    assert status == 1 and summary["counts"]["failed"] == 4

    def barely(*args, **kwargs):
        cert = real(*args, **kwargs)
        return dataclasses.replace(cert, theorem_slack=np.minimum(cert.theorem_slack, -0.9e-6))

    monkeypatch.setattr(harness.composition, "certify", barely)
    assert harness.run("certify", config, tmp_path / "edge")[0] == 0


def test_certify_parallel_matches_serial(tmp_path):
    cfg = write(tmp_path, RANDOM)
    assert run("certify", "--config", cfg, "--out", tmp_path / "s") == 0
    assert run("certify", "--config", cfg, "--out", tmp_path / "p", "--jobs", 2) == 0
    assert files(tmp_path / "s") == files(tmp_path / "p")


def test_bench_report(tmp_path):
    config = harness.load_config(dict(SMALL_GRID, temperature=1.0))
    status, report = harness.run("bench", config, tmp_path)
    assert status == 0
    jsonschema.validate(read_json(tmp_path / "bench/report.json"),
                        harness._schema("report.schema.json"))
    rows = {(r["method"], r["metric_name"]): r for r in report["rows"]}
    assert {m for m, _ in rows} == set(harness.METHODS)
    assert all(r["n"] == 3 for r in report["rows"])
    inst = harness.build_instance(config, 0)
    compound = RewardTable((inst.tasks[0].values + inst.tasks[1].values) / 2)
    direct = solve_soft_q(inst.mdp, compound, 1.0, config.tol)
    assert rows["soft-direct", "additional_bellman_sweeps"]["mean"] == direct.diagnostics.iterations
    for method in ("soft-merged", "hard-merged"):
        assert rows[method, "additional_bellman_sweeps"]["mean"] == 0
    assert rows["hard-direct", "additional_bellman_sweeps"]["mean"] >= 1
    assert report["certificates"][0]["status"] == "valid"
    with open(tmp_path / "bench/rollouts.csv") as fh:
        reader = csv.reader(fh)
        assert tuple(next(reader)) == harness.ROLLOUT_COLUMNS
        assert len(list(reader)) == 4 * 3
    with open(tmp_path / "bench/report.csv") as fh:
        assert tuple(next(csv.reader(fh))) == harness.REPORT_COLUMNS


def test_bench_formats(tmp_path):
    doc = dict(SMALL_GRID, output={"dir": str(tmp_path / "x"), "formats": ["csv"]})
    assert run("bench", "--config", write(tmp_path, doc)) == 0
    assert not (tmp_path / "x/bench/report.json").exists()
    assert (tmp_path / "x/bench/report.csv").exists()


def test_bench_needs_grid(tmp_path):
    assert run("bench", "--config", write(tmp_path, RANDOM), "--out", tmp_path) == 2


def test_plotdata_traces(tmp_path):
    doc = dict(SMALL_GRID, temperature=1.0, residual_descent={"step": 0.8})
    assert run("plotdata", "--config", write(tmp_path, doc), "--out", tmp_path) == 0
    with open(tmp_path / "plotdata/traces.csv") as fh:
        rows = list(csv.DictReader(fh))
    direct = [float(r["residual"]) for r in rows if r["method"] == "soft-direct"]
    assert all(b < a for a, b in zip(direct[1:], direct[2:]))
    assert not [r for r in rows if "merged" in r["method"]]
    descent = [float(r["residual"]) for r in rows if r["method"] == "residual-descent"]
    assert descent[-1] <= harness.load_config(doc).tol


def test_verify_and_gen(tmp_path):
    assert run("verify", "--config", "fixture:tiny", "--out", tmp_path, "--seed-override", 3) == 0
    summary = read_json(tmp_path / "verify/summary.json")
    assert summary["counts"]["fail"] == 0 and summary["counts"]["pass"] >= 4
    assert run("gen", "--config", write(tmp_path, RANDOM), "--out", tmp_path) == 0
    doc = read_json(tmp_path / "gen/seed-2.json")
    assert set(doc["rewards"]) == {"a", "b"}


def test_compose_writes_documents(tmp_path):
    assert run("compose", "--config", write(tmp_path, RANDOM), "--out", tmp_path) == 0
    doc = read_json(tmp_path / "compose/seed-0/a+b.json")
    assert doc["subset"] == ["a", "b"]


def test_random_instances_vary_by_seed():
    config = harness.load_config(RANDOM)
    sizes = {harness.build_instance(config, s).mdp.num_states for s in range(30)}
    assert sizes == {2, 3, 4}
    a, b = harness.build_instance(config, 5), harness.build_instance(config, 5)
    assert np.array_equal(a.mdp.transition, b.mdp.transition)
    assert b.tasks["b"].bound == 2.0


def test_overrides_enter_the_hash():
    base = harness.load_config(RANDOM)
    other = harness.load_config(RANDOM, seed_override=9, tol=1e-8)
    assert other.seeds == (9,) and other.tol == 1e-8
    assert base.hash != other.hash
    moved = harness.load_config(dict(RANDOM, output={"dir": "elsewhere"}))
    assert moved.hash == base.hash


@pytest.mark.parametrize("patch, message", [
    ({"version": 2}, "version"),
    ({"colour": "red"}, "Additional properties"),
    ({"seeds": []}, "seeds"),
    ({"seeds": [1, 1]}, "distinct"),
    ({"subsets": [["a", "zzz"]]}, "unknown task"),
    ({"tasks": [{"label": "a", "line": {"axis": "row", "target": 0}}]}, "different MDP source"),
    ({"mdp": {"file": "missing.json"}, "tasks": None}, "cannot read MDP file"),
])
def test_config_errors(tmp_path, capsys, patch, message):
    doc = {**RANDOM, **patch}
    doc = {k: v for k, v in doc.items() if v is not None}
    assert run("solve", "--config", write(tmp_path, doc), "--out", tmp_path) == 2
    assert message in capsys.readouterr().err


def test_usage_errors(tmp_path, capsys):
    assert run("solve", "--config", tmp_path / "nope.json") == 2
    assert run("solve", "--config", "fixture:nope") == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run("solve", "--config", bad) == 2
    with pytest.raises(SystemExit) as info:
        run("frobnicate")
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        run("solve", "--config", bad, "--jobs", 0)
    assert info.value.code == 2


def test_grid_config_errors(tmp_path, capsys):
    doc = dict(SMALL_GRID, mdp={"grid": {"width": 3, "height": 3, "start": [5, 5]}, "discount": 0.9})
    assert run("solve", "--config", write(tmp_path, doc), "--out", tmp_path) == 2
    assert "outside" in capsys.readouterr().err


def test_solver_failure_exit_status(tmp_path, capsys, monkeypatch):
    from softcompose.solver import ConvergenceError

    def fail(*args, **kwargs):
        raise ConvergenceError("stuck")

    monkeypatch.setattr(harness.solver, "solve_soft_q", fail)
    assert run("solve", "--config", write(tmp_path, RANDOM), "--out", tmp_path) == 1
    assert "stuck" in capsys.readouterr().err


def test_shipped_fixtures_validate():
    for name in ("line9", "cup", "block", "sweep100", "identical", "tiny"):
        assert harness.load_config(harness.fixture_path(name)).seeds
