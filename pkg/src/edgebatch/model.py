"""Domain model for deadline-constrained batched inference serving.

Units are fixed package-wide: seconds, Hz, bits, linear watts. A scheduled
task uploads its payload over a dedicated sub-band from its arrival until
the start instant of the batch that executes it, so the minimum sub-band
width is payload / (spectral_efficiency * upload_window). Batch execution
time is linear in batch size with a fixed memory-access charge for any
non-empty batch; empty batches cost nothing.

The feasibility checker in this module is the single authority used by
every scheduler and every test: a schedule is valid iff each assigned
task's batch starts strictly after its arrival, finishes by its deadline,
batches run back-to-back in order, and the per-task minimum sub-bands sum
to at most the system bandwidth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional

__all__ = [
    "CausalityError",
    "MalformedScheduleError",
    "Task",
    "DelayModel",
    "Scenario",
    "Schedule",
    "Violation",
    "FeasibilityReport",
    "Tolerances",
    "spectral_efficiency",
    "batch_delay",
    "required_bandwidth",
    "check_schedule",
    "throughput",
    "empty_schedule",
    "horizon_cap",
]


class CausalityError(ValueError):
    """A batch start does not strictly follow the task's arrival."""


class MalformedScheduleError(ValueError):
    """Schedule references unknown tasks or batches (distinct from infeasibility)."""


@dataclass(frozen=True)
class Task:
    """One inference request with its arrival, deadline and channel state."""

    id: int
    arrival: float
    deadline: float
    payload_bits: float
    tx_power: float
    channel_gain: float

    def __post_init__(self) -> None:
        if self.arrival < 0:
            raise ValueError(f"task {self.id}: arrival must be >= 0")
        if self.deadline <= self.arrival:
            raise ValueError(f"task {self.id}: deadline must exceed arrival")
        if self.payload_bits <= 0:
            raise ValueError(f"task {self.id}: payload_bits must be > 0")
        if self.tx_power <= 0 or self.channel_gain <= 0:
            raise ValueError(f"task {self.id}: power and gain must be > 0")


@dataclass(frozen=True)
class DelayModel:
    """Linear batch-execution latency: per_task * size + fixed for size >= 1."""

    per_task: float
    fixed: float

    def __post_init__(self) -> None:
        if self.per_task <= 0:
            raise ValueError("per_task must be > 0")
        if self.fixed < 0:
            raise ValueError("fixed must be >= 0")


@dataclass(frozen=True)
class Scenario:
    """A task population plus the system constants they compete for.

    ``seed``/``prng`` are optional provenance carried through serialization;
    they do not affect any computation.
    """

    tasks: tuple[Task, ...]
    total_bandwidth: float
    noise_power: float
    delay_model: DelayModel
    seed: Optional[int] = None
    prng: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if self.total_bandwidth <= 0:
            raise ValueError("total_bandwidth must be > 0")
        if self.noise_power <= 0:
            raise ValueError("noise_power must be > 0")
        ids = [t.id for t in self.tasks]
        if ids != list(range(len(ids))):
            raise ValueError("task ids must be 0..K-1 in order")

    @property
    def num_tasks(self) -> int:
        return len(self.tasks)

    def rate(self, task: Task) -> float:
        """Spectral efficiency of one task's channel, bits/s/Hz."""
        return spectral_efficiency(task.tx_power, task.channel_gain, self.noise_power)


@dataclass(frozen=True)
class Schedule:
    """Task-to-batch assignment, batch start times and per-task sub-bands.

    Each task appears at most once (the mapping enforces it); batch starts
    are non-decreasing and empty batches are allowed.
    """

    assignment: Mapping[int, int]
    batch_starts: tuple[float, ...]
    bandwidths: Mapping[int, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "assignment", dict(self.assignment))
        object.__setattr__(self, "batch_starts", tuple(self.batch_starts))
        object.__setattr__(self, "bandwidths", dict(self.bandwidths))
        for earlier, later in zip(self.batch_starts, self.batch_starts[1:]):
            if later < earlier:
                raise ValueError("batch_starts must be non-decreasing")
        for tid, batch in self.assignment.items():
            if not 0 <= batch < len(self.batch_starts):
                raise ValueError(f"task {tid}: batch index {batch} out of range")
        if set(self.bandwidths) != set(self.assignment):
            raise ValueError("bandwidths must be defined exactly for scheduled tasks")
        for tid, hz in self.bandwidths.items():
            if hz <= 0:
                raise ValueError(f"task {tid}: bandwidth must be > 0")

    def batch_members(self) -> list[list[int]]:
        """Sorted task ids per batch."""
        members: list[list[int]] = [[] for _ in self.batch_starts]
        for tid in sorted(self.assignment):
            members[self.assignment[tid]].append(tid)
        return members


def empty_schedule() -> Schedule:
    return Schedule({}, (), {})


@dataclass(frozen=True)
class Violation:
    """One violated constraint instance with its signed magnitude."""

    constraint: str  # causality | deadline | batch_order | bandwidth_total | multi_assignment
    task_id: Optional[int]
    batch: Optional[int]
    magnitude: float


@dataclass(frozen=True)
class FeasibilityReport:
    violations: tuple[Violation, ...]

    @property
    def is_feasible(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class Tolerances:
    """Numeric slack used by the checker.

    time_margin keeps the strict start-after-arrival inequality testable in
    floating point; rel_bandwidth absorbs rounding accumulated over K terms;
    numeric_eps covers ulp-level noise in the non-strict comparisons.
    """

    time_margin: float = 1e-9
    rel_bandwidth: float = 1e-9
    numeric_eps: float = 1e-12

    def __post_init__(self) -> None:
        if min(self.time_margin, self.rel_bandwidth, self.numeric_eps) <= 0:
            raise ValueError("tolerances must be > 0")


def spectral_efficiency(tx_power: float, channel_gain: float, noise_power: float) -> float:
    """Channel spectral efficiency log2(1 + p*h/sigma^2) in bits/s/Hz."""
    if tx_power <= 0 or channel_gain <= 0 or noise_power <= 0:
        raise ValueError("tx_power, channel_gain and noise_power must be > 0")
    return math.log2(1.0 + tx_power * channel_gain / noise_power)


def batch_delay(size: int, model: DelayModel) -> float:
    """Execution latency of a batch of ``size`` tasks; empty batches are free."""
    if size < 0:
        raise ValueError("size must be >= 0")
    if size == 0:
        return 0.0
    return model.per_task * size + model.fixed


def required_bandwidth(
    task: Task,
    batch_start: float,
    noise_power: float,
    time_margin: float = 1e-9,
) -> float:
    """Minimum sub-band width (Hz) to finish uploading by ``batch_start``."""
    window = batch_start - task.arrival
    if window <= time_margin:
        raise CausalityError(
            f"task {task.id}: batch start {batch_start} does not leave an upload "
            f"window after arrival {task.arrival}"
        )
    rate = spectral_efficiency(task.tx_power, task.channel_gain, noise_power)
    return task.payload_bits / (rate * window)


def throughput(schedule: Schedule) -> int:
    """Number of scheduled (= completed, if feasible) tasks."""
    return len(schedule.assignment)


def horizon_cap(scenario: Scenario) -> float:
    """Upper bound on any useful time instant: max deadline + full-batch delay.

    Large enough to deactivate the deadline constraint for unassigned tasks
    and to act as the sentinel start of the (N+1)-th, nonexistent batch.
    """
    if not scenario.tasks:
        return batch_delay(0, scenario.delay_model)
    return max(t.deadline for t in scenario.tasks) + batch_delay(
        scenario.num_tasks, scenario.delay_model
    )


def check_schedule(
    scenario: Scenario,
    schedule: Schedule,
    tol: Tolerances = Tolerances(),
) -> FeasibilityReport:
    """Validate a schedule against every feasibility constraint.

    Reports each violated instance of: start-after-arrival (strict, with
    time_margin), deadline, back-to-back batch ordering between consecutive
    non-empty batches, and the total-bandwidth budget. Unknown task ids are
    a structural error, not an infeasibility. Pure function.
    """
    by_id = {t.id: t for t in scenario.tasks}
    for tid in schedule.assignment:
        if tid not in by_id:
            raise MalformedScheduleError(f"schedule references unknown task id {tid}")

    n_batches = len(schedule.batch_starts)
    sizes = [0] * n_batches
    for tid, batch in schedule.assignment.items():
        sizes[batch] += 1
    delays = [batch_delay(s, scenario.delay_model) for s in sizes]

    violations: list[Violation] = []
    for tid in sorted(schedule.assignment):
        batch = schedule.assignment[tid]
        task = by_id[tid]
        start = schedule.batch_starts[batch]
        if start <= task.arrival + tol.time_margin:
            violations.append(Violation("causality", tid, batch, task.arrival - start))
        finish = start + delays[batch]
        slack = tol.numeric_eps * max(1.0, abs(task.deadline))
        if finish > task.deadline + slack:
            violations.append(Violation("deadline", tid, batch, finish - task.deadline))

    non_empty = [n for n in range(n_batches) if sizes[n] > 0]
    for cur, nxt in zip(non_empty, non_empty[1:]):
        finish = schedule.batch_starts[cur] + delays[cur]
        slack = tol.numeric_eps * max(1.0, abs(schedule.batch_starts[nxt]))
        if finish > schedule.batch_starts[nxt] + slack:
            violations.append(
                Violation("batch_order", None, cur, finish - schedule.batch_starts[nxt])
            )

    total = 0.0
    for tid in sorted(schedule.assignment):
        task = by_id[tid]
        start = schedule.batch_starts[schedule.assignment[tid]]
        if start > task.arrival + tol.time_margin:
            total += required_bandwidth(task, start, scenario.noise_power, tol.time_margin)
        # else: already reported as a causality violation; no finite demand exists
    budget = scenario.total_bandwidth
    if total > budget * (1.0 + tol.rel_bandwidth):
        violations.append(Violation("bandwidth_total", None, None, total - budget))

    return FeasibilityReport(tuple(violations))
