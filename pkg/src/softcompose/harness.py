"""Experiment pipelines behind the command-line tool.

A config names an MDP source, the reward tasks defined on it, the task
subsets to compose, and the seeds to run. Every ``cmd_*`` function takes a
loaded :class:`ExperimentConfig` and an output directory, writes its
artifacts there, and returns ``(exit_status, summary)``.

All randomness derives from the config's seeds, and no timestamps are
written, so identical configs give byte-identical files.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import __version__, composition, envs, oracle, solver
from .mdp import FiniteMdp, InvalidMdpError, RewardTable, TaskSet, check_task_set, derive_seed
from .mdp import random_mdp, random_reward
from .serialization import (
    certificate_to_doc,
    dumps,
    load_mdp,
    policy_to_doc,
    qtable_to_doc,
    save_mdp,
    solution_to_doc,
    write_json,
)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2

METHODS = ("soft-direct", "soft-merged", "hard-direct", "hard-merged")
METRICS = ("final_distance", "final_on_target", "reached_goal", "hit_obstacle",
           "additional_bellman_sweeps")
REPORT_COLUMNS = ("task_label", "method", "metric_name", "mean", "std", "n")
ROLLOUT_COLUMNS = ("task", "method", "seed", "final_distance", "reached_goal", "hit_obstacle")
TRACE_COLUMNS = ("task", "method", "seed", "iteration", "residual")

# tolerance for oracle agreement in ``verify``
VERIFY_SOLVE_FACTOR = 2.0
VERIFY_EVAL_FACTOR = 10.0
VERIFY_CERT_TOL = 1e-8


class ConfigError(ValueError):
    """The config is malformed or refers to something that does not exist."""


def _schema(name: str) -> dict:
    return json.loads(resources.files("softcompose").joinpath("schemas", name).read_text())


def fixture_path(name: str) -> Path:
    """Path of a config shipped with the package, e.g. ``fixture_path("line9")``."""
    path = Path(str(resources.files("softcompose").joinpath("fixtures", f"{name}.json")))
    if not path.is_file():
        raise ConfigError(f"no shipped fixture named {name!r}")
    return path


def config_hash(raw: dict) -> str:
    """SHA-256 of the canonical config, ignoring where output goes."""
    doc = {k: v for k, v in raw.items() if k != "output"}
    return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    base_dir: Path
    seeds: tuple
    temperature: float
    tol: float
    labels: tuple
    subsets: tuple
    output_dir: Optional[Path]
    formats: tuple

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    @property
    def is_grid(self) -> bool:
        return "grid" in self.raw["mdp"]

    def subset_label(self, subset) -> str:
        return "+".join(self.labels[i] for i in subset)


def _expand_seeds(spec) -> list:
    if isinstance(spec, dict):
        return list(range(spec["start"], spec["start"] + spec["count"]))
    return list(spec)


def load_config(source, seed_override: Optional[int] = None, tol: Optional[float] = None) -> ExperimentConfig:
    """Read, validate and resolve a config from a path or an already parsed dict.

    Command-line overrides are folded into the stored document, so they are
    part of the config hash.
    """
    if isinstance(source, dict):
        raw, base_dir = copy.deepcopy(source), Path.cwd()
    else:
        path = Path(source)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        base_dir = path.resolve().parent
    if seed_override is not None:
        raw["seeds"] = [int(seed_override)]
    if tol is not None:
        raw["tol"] = float(tol)
    try:
        jsonschema.validate(raw, _schema("config.schema.json"))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc

    seeds = _expand_seeds(raw["seeds"])
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct")
    labels = _task_labels(raw, base_dir)
    subsets = []
    for names in raw.get("subsets", [labels[:2]] if len(labels) >= 2 else []):
        missing = [n for n in names if n not in labels]
        if missing:
            raise ConfigError(f"subset refers to unknown task(s) {missing}")
        if len(set(names)) != len(names):
            raise ConfigError(f"subset {names} repeats a task")
        subsets.append(tuple(labels.index(n) for n in names))
    out = raw.get("output", {})
    return ExperimentConfig(
        raw=raw,
        base_dir=base_dir,
        seeds=tuple(seeds),
        temperature=float(raw.get("temperature", 1.0)),
        tol=float(raw.get("tol", solver.DEFAULT_TOL)),
        labels=tuple(labels),
        subsets=tuple(subsets),
        output_dir=Path(out["dir"]) if "dir" in out else None,
        formats=tuple(out.get("formats", ["json", "csv"])),
    )


def _task_labels(raw: dict, base_dir: Path) -> list:
    tasks = raw.get("tasks")
    if tasks is None:
        if "file" not in raw["mdp"]:
            raise ConfigError("tasks may only be omitted when the MDP comes from a file")
        return list(_load_file(raw, base_dir)[1].labels)
    labels = [t["label"] for t in tasks]
    if len(set(labels)) != len(labels):
        raise ConfigError("task labels must be unique")
    source = "file" if "file" in raw["mdp"] else "random" if "random" in raw["mdp"] else "grid"
    allowed = {"file": {"file"}, "random": {"random"}, "grid": {"line", "goal", "avoid"}}[source]
    for t in tasks:
        kind = next(k for k in t if k != "label")
        if kind not in allowed:
            raise ConfigError(f"task {t['label']!r}: a {kind!r} task needs a different MDP source "
                              f"than {source!r}")
    return labels


def _load_file(raw: dict, base_dir: Path):
    path = base_dir / raw["mdp"]["file"]
    try:
        return load_mdp(path)
    except OSError as exc:
        raise ConfigError(f"cannot read MDP file {path}: {exc.strerror}") from exc
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"MDP file {path} is malformed: {exc}") from exc


@dataclass(frozen=True)
class Instance:
    mdp: FiniteMdp
    tasks: TaskSet
    grid: Optional[envs.GridSpec] = None


def grid_spec(config: ExperimentConfig) -> envs.GridSpec:
    g = config.raw["mdp"]["grid"]
    try:
        return envs.GridSpec(g["width"], g["height"], tuple(g.get("start", (0, 0))),
                             frozenset(tuple(c) for c in g.get("obstacles", [])),
                             g.get("slip_prob", 0.0))
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc


def _draw_size(rng, size) -> int:
    if isinstance(size, list):
        lo, hi = size
        if lo > hi:
            raise ConfigError(f"size range {size} is empty")
        return int(rng.integers(lo, hi + 1))
    return int(size)


def build_instance(config: ExperimentConfig, seed: int) -> Instance:
    """The MDP and task rewards for one seed.

    Random MDPs draw their sizes and discount from the seed as well, so a
    seed list sweeps over instances of varying shape.
    """
    src = config.raw["mdp"]
    try:
        if "file" in src:
            mdp, stored = _load_file(config.raw, config.base_dir)
            tasks = stored
            if "tasks" in config.raw:
                names = [t["file"] for t in config.raw["tasks"]]
                missing = [n for n in names if n not in stored.labels]
                if missing:
                    raise ConfigError(f"MDP file has no reward(s) named {missing}")
                tasks = TaskSet([stored[n] for n in names], list(config.labels))
            check_task_set(mdp, tasks)
            return Instance(mdp, tasks)
        if "random" in src:
            spec = src["random"]
            rng = np.random.default_rng(derive_seed(seed, 1))
            n_states = _draw_size(rng, spec["num_states"])
            n_actions = _draw_size(rng, spec["num_actions"])
            disc = spec["discount"]
            discount = float(disc[rng.integers(len(disc))]) if isinstance(disc, list) else float(disc)
            mdp = random_mdp(derive_seed(seed, 2), n_states, n_actions, discount,
                             spec.get("sparsity", 1.0))
            rewards = []
            for i, t in enumerate(config.raw["tasks"]):
                r = t["random"]
                stream = r.get("stream", i)
                rewards.append(random_reward(derive_seed(seed, 3, stream), mdp, r.get("bound", 1.0)))
            return Instance(mdp, TaskSet(rewards, list(config.labels)))
        spec = grid_spec(config)
        mdp = envs.build_grid_mdp(spec, src["discount"])
        return Instance(mdp, TaskSet([_grid_reward(spec, t) for t in config.raw["tasks"]],
                                     list(config.labels)), spec)
    except (InvalidMdpError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot build instance for seed {seed}: {exc}") from exc


def _grid_reward(spec: envs.GridSpec, task: dict) -> RewardTable:
    if "line" in task:
        line = task["line"]
        return envs.line_reward(spec, envs.LineGoalTask(line["axis"], line["target"],
                                                        line.get("style", "negative-distance")))
    if "goal" in task:
        return envs.goal_distance_reward(spec, tuple(task["goal"]["cell"]))
    avoid = task["avoid"]
    return envs.obstacle_avoid_reward(spec, avoid["penalty"], tuple(avoid["goal"]))


def task_target(task: dict) -> tuple:
    """(row, col) that a grid task steers towards, ``None`` where it is free."""
    if "line" in task:
        line = task["line"]
        return (None, line["target"]) if line["axis"] == "column" else (line["target"], None)
    cell = task["goal"]["cell"] if "goal" in task else task["avoid"]["goal"]
    return tuple(cell)


def compound_target(config: ExperimentConfig, subset) -> tuple:
    """Intersection of the constituents' targets."""
    out = [None, None]
    for i in subset:
        for axis, value in enumerate(task_target(config.raw["tasks"][i])):
            if value is None:
                continue
            if out[axis] is not None and out[axis] != value:
                raise ConfigError(f"subset {config.subset_label(subset)} has no common target")
            out[axis] = value
    return tuple(out)


def _seed_dir(out: Path, command: str, seed: int) -> Path:
    return out / command / f"seed-{seed}"


def _run_units(fn, units, jobs: int) -> list:
    """Map ``fn`` over ``units`` in order, optionally across processes."""
    if jobs <= 1 or len(units) <= 1:
        return [fn(u) for u in units]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, units))


def solution_violations(mdp: FiniteMdp, reward: RewardTable, sol: solver.SoftSolution,
                        tol: float) -> list:
    """Checks every soft solution must pass: sandwich bounds and a small residual."""
    q, v = sol.q.values, sol.value.values
    alpha = sol.q.temperature
    problems = []
    qmax = q.max(axis=1)
    slack = 1e-12 * np.maximum(1.0, np.abs(qmax))
    if np.any(v < qmax - slack) or np.any(v > qmax + alpha * math.log(mdp.num_actions) + slack):
        problems.append("soft value outside [max Q, max Q + alpha ln|A|]")
    residual = float(np.max(np.abs(solver.soft_backup(mdp, reward, sol.q).values - q)))
    if residual > 2 * tol:
        problems.append(f"Bellman residual {residual:.3e} exceeds 2*tol")
    if np.any(np.abs(sol.policy.probs.sum(axis=1) - 1.0) > 1e-12):
        problems.append("policy rows do not sum to 1")
    return problems


def cmd_solve(config: ExperimentConfig, out: Path, jobs: int = 1):
    """Soft-optimal Q, V, policy and diagnostics for every task and seed."""
    results = _run_units(_solve_seed, [(config, out, s) for s in config.seeds], jobs)
    problems = [p for r in results for p in r]
    status = EXIT_VIOLATION if problems else EXIT_OK
    return status, {"command": "solve", "violations": problems}


def _solve_seed(unit):
    config, out, seed = unit
    inst = build_instance(config, seed)
    problems = []
    for label, reward in zip(inst.tasks.labels, inst.tasks.rewards):
        sol = solver.solve_soft_q(inst.mdp, reward, config.temperature, config.tol)
        problems += [f"seed {seed} task {label}: {p}"
                     for p in solution_violations(inst.mdp, reward, sol, config.tol)]
        write_json(_seed_dir(out, "solve", seed) / f"{label}.json", solution_to_doc(sol))
    return problems


def cmd_compose(config: ExperimentConfig, out: Path, jobs: int = 1):
    """Mean Q-function and Boltzmann policy for every configured subset."""
    _run_units(_compose_seed, [(config, out, s) for s in config.seeds], jobs)
    return EXIT_OK, {"command": "compose", "subsets": [config.subset_label(s) for s in config.subsets]}


def _compose_seed(unit):
    config, out, seed = unit
    inst = build_instance(config, seed)
    sols = {}
    for subset in config.subsets:
        for i in subset:
            if i not in sols:
                sols[i] = solver.solve_soft_q(inst.mdp, inst.tasks[i], config.temperature, config.tol)
        composed = composition.compose(inst.mdp, inst.tasks, subset, [sols[i] for i in subset])
        write_json(_seed_dir(out, "compose", seed) / f"{config.subset_label(subset)}.json", {
            "kind": "composition",
            "subset": [config.labels[i] for i in subset],
            "compound_reward": composed.compound_reward.values,
            "q_sigma": qtable_to_doc(composed.q_sigma),
            "pi_sigma": policy_to_doc(composed.pi_sigma),
        })


def _require_pairs(config: ExperimentConfig):
    for subset in config.subsets:
        if len(subset) != 2:
            raise ConfigError(f"certificates are pairwise only; subset "
                              f"{config.subset_label(subset)} has {len(subset)} tasks")
    if not config.subsets:
        raise ConfigError("certify needs at least one two-task subset")


def cmd_certify(config: ExperimentConfig, out: Path, jobs: int = 1):
    """One bound certificate per subset per seed; exit 1 if any slack < -1e-6."""
    _require_pairs(config)
    if config.temperature != 1.0:
        raise ConfigError("certificates are only established at temperature 1")
    results = _run_units(_certify_seed, [(config, out, s) for s in config.seeds], jobs)
    entries = sorted((e for r in results for e in r), key=lambda e: (e["seed"], e["subset_label"]))
    counts = {k: sum(e["status"] == k for e in entries) for k in ("valid", "vacuous", "failed")}
    summary = {"command": "certify", "config_hash": config.hash, "counts": counts,
               "certificates": entries}
    write_json(out / "certify" / "summary.json", summary)
    _write_csv(out / "certify" / "summary.csv",
               ("seed", "subset", "status", "max_c_star", "max_d_star", "min_slack"),
               [(e["seed"], e["subset_label"], e["status"], _num(e["max_c_star"]),
                 _num(e["max_d_star"]), _num(min(e["min_slack"].values()))) for e in entries])
    return (EXIT_VIOLATION if counts["failed"] else EXIT_OK), summary


def _certify_seed(unit):
    config, out, seed = unit
    inst = build_instance(config, seed)
    entries = []
    for subset in config.subsets:
        cert = composition.certify(inst.mdp, inst.tasks, subset, config.temperature, config.tol)
        label = config.subset_label(subset)
        write_json(_seed_dir(out, "certify", seed) / f"{label}.json", certificate_to_doc(cert))
        entry = cert.summary()
        entry.update(seed=seed, subset_label=label, num_states=inst.mdp.num_states,
                     num_actions=inst.mdp.num_actions, discount=inst.mdp.discount)
        entries.append(entry)
    return entries


def _num(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, columns, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    path.write_text(buf.getvalue())


@dataclass(frozen=True)
class MethodResult:
    policy: solver.StochasticPolicy
    sweeps: int


def bench_methods(inst: Instance, subset, temperature: float, tol: float) -> dict:
    """The four policies compared for one compound goal.

    Direct methods solve the compound reward from scratch; merged methods
    only combine constituent Q-functions, so they cost no extra sweeps.
    """
    compound = RewardTable(sum(inst.tasks[i].values for i in subset) / len(subset))
    soft_direct = solver.solve_soft_q(inst.mdp, compound, temperature, tol)
    hard_direct = solver.hard_max_solve(inst.mdp, compound, tol)
    soft_parts = [solver.solve_soft_q(inst.mdp, inst.tasks[i], temperature, tol) for i in subset]
    hard_parts = [solver.hard_max_solve(inst.mdp, inst.tasks[i], tol).q for i in subset]
    merged = composition.compose(inst.mdp, inst.tasks, subset, soft_parts)
    return {
        "soft-direct": MethodResult(soft_direct.policy, soft_direct.diagnostics.iterations),
        "soft-merged": MethodResult(merged.pi_sigma, 0),
        "hard-direct": MethodResult(hard_direct.policy, hard_direct.diagnostics.iterations),
        "hard-merged": MethodResult(composition.hard_merge(hard_parts, tie_tol=tol), 0),
    }


def rollout_metrics(r: envs.Rollout, spec: envs.GridSpec, target) -> dict:
    cells = [spec.cell(s) for s in r.states]
    return {
        "final_distance": envs.cell_distance(cells[-1], target),
        "final_on_target": float(envs.cell_distance(cells[-1], target) == 0.0),
        "reached_goal": float(any(envs.cell_distance(c, target) == 0.0 for c in cells)),
        "hit_obstacle": float(envs.hit_hazard(r, spec)),
    }


def horizon_for(config: ExperimentConfig, spec: envs.GridSpec) -> int:
    return int(config.raw.get("rollouts", {}).get("horizon", spec.default_horizon()))


def cmd_bench(config: ExperimentConfig, out: Path, jobs: int = 1):
    """Four-method rollout table per compound goal, plus sweep counts."""
    if not config.is_grid:
        raise ConfigError("bench needs a grid MDP")
    if not config.subsets:
        raise ConfigError("bench needs at least one subset")
    inst = build_instance(config, config.seeds[0])
    spec = inst.grid
    horizon = horizon_for(config, spec)
    rows, rollout_rows, certificates = [], [], []
    for subset in config.subsets:
        label = config.subset_label(subset)
        target = compound_target(config, subset)
        methods = bench_methods(inst, subset, config.temperature, config.tol)
        for method in METHODS:
            res = methods[method]
            per_seed = []
            for seed in config.seeds:
                r = envs.rollout(inst.mdp, res.policy, spec.start_state, horizon, seed)
                m = rollout_metrics(r, spec, target)
                per_seed.append(m)
                rollout_rows.append((label, method, seed, _num(m["final_distance"]),
                                     int(m["reached_goal"]), int(m["hit_obstacle"])))
            for metric in METRICS[:-1]:
                vals = np.array([m[metric] for m in per_seed])
                rows.append(_row(label, method, metric, vals.mean(), vals.std(), len(vals)))
            rows.append(_row(label, method, "additional_bellman_sweeps", res.sweeps, 0.0,
                             len(config.seeds)))
        if len(subset) == 2 and config.temperature == 1.0:
            cert = composition.certify(inst.mdp, inst.tasks, subset, 1.0, config.tol)
            s = cert.summary()
            certificates.append({"task_label": label, "status": s["status"],
                                 "max_c_star": s["max_c_star"], "max_d_star": s["max_d_star"],
                                 "min_slack": s["min_slack"]})
    report = {
        "kind": "bench-report",
        "rows": rows,
        "certificates": certificates,
        "provenance": {
            "config_hash": config.hash,
            "seeds": list(config.seeds),
            "tool_version": __version__,
            "temperature": config.temperature,
            "tol": config.tol,
            "horizon": horizon,
        },
    }
    # dumps maps inf to a string, so validate the document as written
    jsonschema.validate(json.loads(dumps(report)), _schema("report.schema.json"))
    bench_dir = out / "bench"
    if "json" in config.formats:
        write_json(bench_dir / "report.json", report)
    if "csv" in config.formats:
        _write_csv(bench_dir / "report.csv", REPORT_COLUMNS,
                   [(r["task_label"], r["method"], r["metric_name"], _num(r["mean"]),
                     _num(r["std"]), r["n"]) for r in rows])
    _write_csv(bench_dir / "rollouts.csv", ROLLOUT_COLUMNS, rollout_rows)
    failed = any(c["status"] == "failed" for c in certificates)
    return (EXIT_VIOLATION if failed else EXIT_OK), report


def _row(label, method, metric, mean, std, n) -> dict:
    return {"task_label": label, "method": method, "metric_name": metric,
            "mean": float(mean), "std": float(std), "n": int(n)}


def cmd_plotdata(config: ExperimentConfig, out: Path, jobs: int = 1):
    """Residual-per-iteration traces for direct solve, merging and residual descent.

    Merging runs no fixed-point iteration, so it contributes no trace rows.
    """
    rd = config.raw.get("residual_descent", {})
    rows = []
    # a grid instance does not depend on the seed
    seeds = config.seeds[:1] if config.is_grid else config.seeds
    for seed in seeds:
        inst = build_instance(config, seed)
        for subset in config.subsets:
            label = config.subset_label(subset)
            compound = RewardTable(sum(inst.tasks[i].values for i in subset) / len(subset))
            direct = solver.solve_soft_q(inst.mdp, compound, config.temperature, config.tol)
            descent = solver.residual_descent_solve(inst.mdp, compound, config.temperature,
                                                    rd.get("step", 0.5), config.tol,
                                                    rd.get("max_iter"))
            for method, trace in (("soft-direct", direct.diagnostics.contraction_trace),
                                  ("residual-descent", descent.diagnostics.contraction_trace)):
                rows += [(label, method, seed, k, _num(res)) for k, res in enumerate(trace)]
    _write_csv(out / "plotdata" / "traces.csv", TRACE_COLUMNS, rows)
    return EXIT_OK, {"command": "plotdata", "rows": len(rows)}


def cmd_verify(config: ExperimentConfig, out: Path, jobs: int = 1):
    """Cross-check production solvers against the brute-force oracles."""
    results = _run_units(_verify_seed, [(config, s) for s in config.seeds], jobs)
    checks = [c for r in results for c in r]
    failed = [c for c in checks if c["status"] == "fail"]
    summary = {"command": "verify", "checks": checks,
               "counts": {k: sum(c["status"] == k for c in checks) for k in ("pass", "fail", "skipped")}}
    write_json(out / "verify" / "summary.json", summary)
    return (EXIT_VIOLATION if failed else EXIT_OK), summary


def _check(seed, what, error, limit):
    return {"seed": seed, "check": what, "max_error": error, "limit": limit,
            "status": "pass" if error <= limit else "fail"}


def _verify_seed(unit):
    config, seed = unit
    inst = build_instance(config, seed)
    mdp, tol, alpha = inst.mdp, config.tol, config.temperature
    checks = []
    for label, reward in zip(inst.tasks.labels, inst.tasks.rewards):
        sol = solver.solve_soft_q(mdp, reward, alpha, tol)
        bound = reward.bound + alpha * math.log(mdp.num_actions)
        horizon = oracle.HorizonConfig.for_tolerance(tol, mdp.discount, bound).horizon
        try:
            ref = oracle.finite_horizon_soft_q(mdp, reward, alpha, horizon)
            err = float(np.max(np.abs(sol.q.values - ref.astype(np.float64))))
            checks.append(_check(seed, f"solve:{label}", err, VERIFY_SOLVE_FACTOR * tol))
        except oracle.OracleInapplicable as exc:
            checks.append({"seed": seed, "check": f"solve:{label}", "status": "skipped",
                           "reason": str(exc)})
        q_eval = solver.soft_policy_evaluation(mdp, reward, sol.policy, alpha, tol)
        try:
            ref = oracle.linear_solve_policy_eval(mdp, reward, sol.policy.probs, alpha)
            err = float(np.max(np.abs(q_eval.values - ref.astype(np.float64))))
            checks.append(_check(seed, f"evaluate:{label}", err, VERIFY_EVAL_FACTOR * tol))
        except oracle.OracleInapplicable as exc:
            checks.append({"seed": seed, "check": f"evaluate:{label}", "status": "skipped",
                           "reason": str(exc)})
    tiny = mdp.num_states <= oracle.TINY_MAX_STATES and mdp.num_actions <= oracle.TINY_MAX_ACTIONS
    for subset in config.subsets:
        name = f"certificate:{config.subset_label(subset)}"
        if len(subset) != 2 or alpha != 1.0 or not tiny:
            checks.append({"seed": seed, "check": name, "status": "skipped",
                           "reason": "needs a tiny instance, a pair and temperature 1"})
            continue
        cert = composition.certify(mdp, inst.tasks, subset, 1.0, tol)
        ref = oracle.exhaustive_tiny_certificate(mdp, inst.tasks[subset[0]], inst.tasks[subset[1]], tol)
        err = max(float(np.max(np.abs(getattr(cert, k) - v))) for k, v in ref.items())
        checks.append(_check(seed, name, err, VERIFY_CERT_TOL))
    return checks


def cmd_gen(config: ExperimentConfig, out: Path, jobs: int = 1):
    """Write each seed's MDP and task rewards as an MDP document."""
    paths = []
    for seed in config.seeds:
        inst = build_instance(config, seed)
        path = out / "gen" / f"seed-{seed}.json"
        save_mdp(path, inst.mdp, inst.tasks)
        paths.append(str(path))
    return EXIT_OK, {"command": "gen", "files": paths}


COMMANDS = {
    "solve": cmd_solve,
    "compose": cmd_compose,
    "certify": cmd_certify,
    "bench": cmd_bench,
    "plotdata": cmd_plotdata,
    "verify": cmd_verify,
    "gen": cmd_gen,
}


def run(command: str, config: ExperimentConfig, out: Optional[Path] = None, jobs: int = 1):
    """Dispatch one pipeline; ``out`` defaults to the config's output directory.

    Relative output paths resolve against the working directory.
    """
    if out is None:
        out = config.output_dir if config.output_dir is not None else Path("softcompose-out")
    return COMMANDS[command](config, Path(out), jobs)

