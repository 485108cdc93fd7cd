"""Experiment harness: parameter sweeps over seeds, CSV results.

One scenario is generated per (value, seed) cell and *shared* by every
requested scheduler, so scheme comparisons are paired. Every schedule is
re-validated by the feasibility checker before it is counted; an invalid
schedule aborts the run - that is a defect, not a recoverable condition.

Output rows are deterministic for a fixed spec (values, seeds and scheduler
order as given). Wall-clock timings are measured but left out of the CSV
unless explicitly requested, keeping repeated runs byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .baselines import equal_bandwidth, greedy_batching, single_batch
from .holes import augment
from .model import DelayModel, Scenario, Schedule, check_schedule, throughput
from .scenario import GenConfig, generate
from .solver import SolverConfig, solve

__all__ = [
    "SCHEDULERS",
    "SWEEP_PARAMETERS",
    "SweepSpec",
    "ResultRow",
    "run_sweep",
    "write_csv",
    "load_sweep_spec",
]

WORKERS_ENV = "EDGEBATCH_WORKERS"

SCHEDULERS = ("jbas", "jbas+holes", "equal", "greedy", "single")
SWEEP_PARAMETERS = ("num_tasks", "min_deadline", "snr_db", "batch_cap", "bandwidth")


@dataclass(frozen=True)
class SweepSpec:
    """One swept parameter, evaluated over seeds for a set of schedulers."""

    parameter: str
    values: tuple
    seeds: tuple[int, ...]
    schedulers: tuple[str, ...]
    gen: GenConfig = field(default_factory=GenConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self) -> None:
        if self.parameter not in SWEEP_PARAMETERS:
            raise ValueError(f"unknown sweep parameter {self.parameter!r}")
        if not self.values or not self.seeds or not self.schedulers:
            raise ValueError("values, seeds and schedulers must be non-empty")
        for name in self.schedulers:
            if name not in SCHEDULERS:
                raise ValueError(f"unknown scheduler {name!r}")


@dataclass(frozen=True)
class ResultRow:
    scheduler: str
    parameter: str
    value: float
    seed: int
    completed: int
    total: int
    completion_rate: float
    wall_time_ms: float


def _apply_value(spec: SweepSpec, value) -> tuple[GenConfig, SolverConfig]:
    gen, solver_cfg = spec.gen, spec.solver
    if spec.parameter == "num_tasks":
        gen = dataclasses.replace(gen, num_tasks=int(value))
    elif spec.parameter == "min_deadline":
        gen = dataclasses.replace(gen, deadline_window=(float(value), gen.deadline_window[1]))
    elif spec.parameter == "snr_db":
        gen = dataclasses.replace(gen, tx_snr_db=float(value))
    elif spec.parameter == "bandwidth":
        gen = dataclasses.replace(gen, total_bandwidth=float(value))
    elif spec.parameter == "batch_cap":
        solver_cfg = dataclasses.replace(solver_cfg, batch_cap=int(value))
    return gen, solver_cfg


def _schedule_for(
    name: str,
    scenario: Scenario,
    solver_cfg: SolverConfig,
    cache: dict[str, Schedule],
) -> Schedule:
    if name in cache:
        return cache[name]
    schedule: Schedule
    if name == "jbas":
        schedule = solve(scenario, solver_cfg)
    elif name == "jbas+holes":
        schedule = augment(scenario, _schedule_for("jbas", scenario, solver_cfg, cache), solver_cfg)
    elif name == "equal":
        schedule = equal_bandwidth(scenario, solver_cfg)
    elif name == "greedy":
        schedule = greedy_batching(scenario, solver_cfg)
    elif name == "single":
        schedule = single_batch(scenario, solver_cfg)
    else:
        raise ValueError(f"unknown scheduler {name!r}")
    cache[name] = schedule
    return schedule


def _sweep_cell(spec: SweepSpec, value, seed: int) -> list[ResultRow]:
    gen, solver_cfg = _apply_value(spec, value)
    gen = dataclasses.replace(gen, seed=int(seed))
    scenario = generate(gen)
    cache: dict[str, Schedule] = {}
    rows = []
    for name in spec.schedulers:
        t0 = time.perf_counter()
        schedule = _schedule_for(name, scenario, solver_cfg, cache)
        elapsed_ms = (time.perf_counter() - t0) * 1e3
        report = check_schedule(scenario, schedule)
        if not report.is_feasible:
            raise RuntimeError(
                f"scheduler {name!r} produced an infeasible schedule at "
                f"{spec.parameter}={value}, seed={seed}: {report.violations}"
            )
        completed = throughput(schedule)
        total = scenario.num_tasks
        rows.append(
            ResultRow(
                scheduler=name,
                parameter=spec.parameter,
                value=float(value),
                seed=int(seed),
                completed=completed,
                total=total,
                completion_rate=completed / total if total else 0.0,
                wall_time_ms=elapsed_ms,
            )
        )
    return rows


def run_sweep(spec: SweepSpec, workers: Optional[int] = None) -> list[ResultRow]:
    """All (scheduler, value, seed) rows, in deterministic order.

    ``workers`` (or the EDGEBATCH_WORKERS environment variable) parallelizes
    the independent (value, seed) cells; results are gathered and ordered
    identically either way.
    """
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    cells = [(value, seed) for value in spec.values for seed in spec.seeds]
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_cell = list(
                pool.map(
                    _sweep_cell,
                    [spec] * len(cells),
                    [v for v, _ in cells],
                    [s for _, s in cells],
                )
            )
    else:
        per_cell = [_sweep_cell(spec, v, s) for v, s in cells]
    rows: list[ResultRow] = []
    for cell_rows in per_cell:
        rows.extend(cell_rows)
    return rows


def write_csv(rows: list[ResultRow], spec: SweepSpec, path: str, timing: bool = False) -> None:
    """Write rows with a self-describing `# key=value` preamble.

    wall_time_ms stays empty unless ``timing`` is set: measured times are
    not reproducible and would break byte-identical reruns.
    """
    gen, solver_cfg = spec.gen, spec.solver
    preamble = {
        "parameter": spec.parameter,
        "schedulers": "|".join(spec.schedulers),
        "num_tasks": gen.num_tasks,
        "arrival_window": f"{gen.arrival_window[0]!r}..{gen.arrival_window[1]!r}",
        "deadline_window": f"{gen.deadline_window[0]!r}..{gen.deadline_window[1]!r}",
        "payload_bits": repr(gen.payload_bits),
        "tx_snr_db": repr(gen.tx_snr_db),
        "mean_path_loss": repr(gen.mean_path_loss),
        "total_bandwidth": repr(gen.total_bandwidth),
        "delay_per_task": repr(gen.delay_model.per_task),
        "delay_fixed": repr(gen.delay_model.fixed),
        "delta": repr(solver_cfg.delta),
        "dual_step0": repr(solver_cfg.dual_step0),
        "dual_max_iters": solver_cfg.dual_max_iters,
        "outer_max_iters": solver_cfg.outer_max_iters,
    }
    with open(path, "w", encoding="utf-8", newline="") as f:
        for key, val in preamble.items():
            f.write(f"# {key}={val}\n")
        f.write("scheduler,parameter,value,seed,completed,total,completion_rate,wall_time_ms\n")
        for r in rows:
            wall = repr(r.wall_time_ms) if timing else ""
            f.write(
                f"{r.scheduler},{r.parameter},{r.value!r},{r.seed},{r.completed},"
                f"{r.total},{r.completion_rate!r},{wall}\n"
            )


def load_sweep_spec(path: str) -> SweepSpec:
    """Parse a sweep spec file (JSON mirroring the SweepSpec fields)."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as err:
            raise ValueError(f"{path}:{err.lineno}: {err.msg}") from err
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: top level must be an object")
    for key in ("parameter", "values", "seeds", "schedulers"):
        if key not in doc:
            raise ValueError(f"{path}: missing field '{key}'")

    gen_doc = dict(doc.get("gen", {}))
    if "delay_model" in gen_doc:
        dm = gen_doc.pop("delay_model")
        gen_doc["delay_model"] = DelayModel(float(dm["a"]), float(dm["b"]))
    for tuple_key in ("arrival_window", "deadline_window"):
        if tuple_key in gen_doc:
            gen_doc[tuple_key] = tuple(gen_doc[tuple_key])
    try:
        gen = GenConfig(**gen_doc)
        solver_cfg = SolverConfig(**dict(doc.get("solver", {})))
        return SweepSpec(
            parameter=str(doc["parameter"]),
            values=tuple(doc["values"]),
            seeds=tuple(int(s) for s in doc["seeds"]),
            schedulers=tuple(str(s) for s in doc["schedulers"]),
            gen=gen,
            solver=solver_cfg,
        )
    except TypeError as err:
        raise ValueError(f"{path}: {err}") from err
