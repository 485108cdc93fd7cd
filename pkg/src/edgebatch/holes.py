"""Checkpoint-based admission of unscheduled tasks into existing batches.

When a batch starts, every sub-band its members (and those of earlier
batches) were using goes quiet; that freed spectrum can carry additional
tasks into the *next* batch if its start is pulled earlier to make room for
a larger batch. At each checkpoint the largest admissible count is found by
bisection over a monotone feasibility probe; the probe walks candidate
completion deadlines from earliest to latest, keeps the cheapest tasks by
sub-band demand, and charges everything against the freed-plus-reallocated
budget.

The probe and the per-checkpoint solver implement that rolling budget
verbatim. The full augmentation pass additionally re-validates the whole
schedule against the static feasibility checker before accepting a
checkpoint's admissions (rolling the count back when needed): the rolling
budget reuses sub-bands over time, which the static accounting - the single
source of truth for every delivered schedule - does not always admit.
Already-scheduled tasks always keep their batch and their deadlines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .model import (
    Scenario,
    Schedule,
    Task,
    Tolerances,
    batch_delay,
    check_schedule,
    horizon_cap,
)
from .solver import SolverConfig

__all__ = [
    "Checkpoint",
    "ProbeResult",
    "feasibility_probe",
    "solve_checkpoint",
    "augment",
    "admit_online",
]


@dataclass(frozen=True)
class Checkpoint:
    """Rolling state at the start of one (non-empty) batch.

    ``index`` is the position of the just-started batch among the non-empty
    batches in time order; the probe targets batch ``index + 1``. Starts and
    bandwidths reflect all adjustments accepted at earlier checkpoints;
    ``freed_bandwidth`` totals the sub-bands of batches 0..index, whose
    uploads have all completed.
    """

    index: int
    unscheduled: frozenset[int]
    batch_members: tuple[frozenset[int], ...]
    batch_starts: tuple[float, ...]
    bandwidths: Mapping[int, float]
    freed_bandwidth: float


@dataclass(frozen=True)
class ProbeResult:
    feasible: bool
    new_start: Optional[float]
    admitted: frozenset[int]


class _TaskArrays:
    def __init__(self, scenario: Scenario):
        self.arr = np.array([t.arrival for t in scenario.tasks])
        self.ddl = np.array([t.deadline for t in scenario.tasks])
        self.bits = np.array([t.payload_bits for t in scenario.tasks])
        self.rate = np.array([scenario.rate(t) for t in scenario.tasks])
        self.model = scenario.delay_model


def _probe_core(
    ta: _TaskArrays,
    free_ids: Sequence[int],
    next_members: Sequence[int],
    residual_bits: Mapping[int, float],
    prev_finish: float,
    window_base: float,
    original_start: Optional[float],
    envelope: float,
    next_fixed_start: float,
    pi: int,
    tol: Tolerances,
) -> ProbeResult:
    """Tentative-deadline feasibility test for admitting ``pi`` new tasks.

    Walks the candidate completion instants (earliest unscheduled deadline
    first, bounded by the incumbent members' deadlines and the successor
    start); for each, the batch start is the latest one, eligibility is
    arrival-before-start plus deadline-at-or-after-completion, and the ``pi``
    cheapest eligible tasks by sub-band demand are charged - together with
    the incumbents' residual payloads - against the envelope.
    """
    if pi == 0:
        return ProbeResult(True, original_start, frozenset())
    if pi > len(free_ids):
        raise ValueError(f"cannot admit {pi} of {len(free_ids)} unscheduled tasks")

    free = np.asarray(sorted(free_ids), dtype=int)
    incumbents = sorted(next_members)
    min_incumbent_ddl = min((ta.ddl[s] for s in incumbents), default=math.inf)
    candidates = sorted({float(ta.ddl[f]) for f in free})
    total_delay = batch_delay(pi + len(incumbents), ta.model)

    while candidates:
        completion = min(candidates[0], min_incumbent_ddl, next_fixed_start)
        start = completion - total_delay

        eligible = free[(ta.arr[free] + tol.time_margin < start) & (ta.ddl[free] >= completion)]
        if eligible.size < pi:
            return ProbeResult(False, None, frozenset())

        incumbent_windows = [start - max(ta.arr[s], window_base) for s in incumbents]
        if start > prev_finish + tol.time_margin and all(
            w > tol.time_margin for w in incumbent_windows
        ):
            windows = start - np.maximum(ta.arr[eligible], window_base)
            demands = ta.bits[eligible] / (ta.rate[eligible] * windows)
            order = np.lexsort((eligible, demands))  # demand, then id
            chosen = eligible[order[:pi]]
            total = float(demands[order[:pi]].sum()) + sum(
                residual_bits[s] / (ta.rate[s] * w)
                for s, w in zip(incumbents, incumbent_windows)
            )
            latest_arrival = max(
                (float(ta.arr[i]) for i in (*chosen, *incumbents)), default=-math.inf
            )
            if (
                total <= envelope * (1.0 + tol.rel_bandwidth)
                and start > latest_arrival + tol.time_margin
            ):
                return ProbeResult(True, float(start), frozenset(int(c) for c in chosen))
        candidates.pop(0)
    return ProbeResult(False, None, frozenset())


def _checkpoint_params(scenario: Scenario, state: Checkpoint) -> dict:
    if not 0 <= state.index < len(state.batch_members) - 1:
        raise ValueError("checkpoint index must address a batch with a successor")
    ta = _TaskArrays(scenario)
    i = state.index
    prev_members = state.batch_members[i]
    next_members = sorted(state.batch_members[i + 1])
    t_prev = state.batch_starts[i]
    t_next = state.batch_starts[i + 1]
    residual_bits = {
        s: state.bandwidths[s] * ta.rate[s] * (t_next - max(ta.arr[s], t_prev))
        for s in next_members
    }
    return {
        "ta": ta,
        "free_ids": sorted(state.unscheduled),
        "next_members": next_members,
        "residual_bits": residual_bits,
        "prev_finish": t_prev + batch_delay(len(prev_members), ta.model),
        "window_base": t_prev,
        "original_start": t_next,
        "envelope": state.freed_bandwidth
        + sum(state.bandwidths[s] for s in next_members),
    }


def feasibility_probe(
    scenario: Scenario,
    state: Checkpoint,
    pi: int,
    next_fixed_start: float,
    config: Optional[SolverConfig] = None,
    tol: Tolerances = Tolerances(),
) -> ProbeResult:
    """Can ``pi`` unscheduled tasks join the next batch at this checkpoint?"""
    params = _checkpoint_params(scenario, state)
    return _probe_core(
        ta=params["ta"],
        free_ids=params["free_ids"],
        next_members=params["next_members"],
        residual_bits=params["residual_bits"],
        prev_finish=params["prev_finish"],
        window_base=params["window_base"],
        original_start=params["original_start"],
        envelope=params["envelope"],
        next_fixed_start=next_fixed_start,
        pi=pi,
        tol=tol,
    )


def _bisect_admissions(probe, upper: int) -> tuple[int, dict[int, ProbeResult]]:
    """Largest feasible count by bisection; feasibility is down-closed in pi."""
    cache: dict[int, ProbeResult] = {}

    def feasible(p: int) -> bool:
        if p not in cache:
            cache[p] = probe(p)
        return cache[p].feasible

    if upper == 0:
        cache[0] = probe(0)
        return 0, cache
    low, up = 0, upper
    while up - low > 1:
        mid = (up + low) // 2
        if feasible(mid):
            low = mid
        else:
            up = mid
    star = up if feasible(up) else low
    if star not in cache:
        cache[star] = probe(star)
    return star, cache


def solve_checkpoint(
    scenario: Scenario,
    state: Checkpoint,
    next_fixed_start: float,
    config: Optional[SolverConfig] = None,
    tol: Tolerances = Tolerances(),
) -> ProbeResult:
    """Maximal admission at one checkpoint (bisection over the probe)."""
    star, cache = _bisect_admissions(
        lambda p: feasibility_probe(scenario, state, p, next_fixed_start, config, tol),
        len(state.unscheduled),
    )
    return cache[star]


def _compact(schedule: Schedule) -> tuple[list[set[int]], list[float]]:
    """Non-empty batches in time order as (member sets, starts)."""
    members_all = schedule.batch_members()
    members: list[set[int]] = []
    starts: list[float] = []
    for batch, ids in enumerate(members_all):
        if ids:
            members.append(set(ids))
            starts.append(schedule.batch_starts[batch])
    return members, starts


def _static_probe(
    ta: _TaskArrays,
    free_ids: Sequence[int],
    incumbents: Sequence[int],
    base_demand: float,
    prev_finish: float,
    completion_bound: float,
    budget: float,
    pi: int,
    fallback_start: Optional[float],
    tol: Tolerances,
) -> ProbeResult:
    """Admission test priced in the dedicated-sub-band (checker) model.

    Same tentative-deadline walk and cheapest-first greedy as the rolling
    probe, but each task's sub-band is charged over its full upload window
    (arrival to batch start) against the system budget net of every other
    scheduled task (``base_demand``) - the exact accounting the feasibility
    checker enforces, so accepted admissions pass it by construction. Used
    by the full augmentation pass; the rolling-budget probe both over-admits
    (time-reuse the static model forbids) and under-admits (it charges
    long-waiting tasks over the post-checkpoint tail only).

    With an empty ``incumbents`` list this probes a brand-new batch in the
    idle gap (prev_finish, completion_bound).
    """
    if pi == 0:
        return ProbeResult(True, fallback_start, frozenset())
    if pi > len(free_ids):
        raise ValueError(f"cannot admit {pi} of {len(free_ids)} unscheduled tasks")

    free = np.asarray(sorted(free_ids), dtype=int)
    incumbents = sorted(incumbents)
    min_incumbent_ddl = min((ta.ddl[s] for s in incumbents), default=math.inf)
    candidates = sorted({float(ta.ddl[f]) for f in free})
    total_delay = batch_delay(pi + len(incumbents), ta.model)

    while candidates:
        completion = min(candidates[0], min_incumbent_ddl, completion_bound)
        start = completion - total_delay

        eligible = free[(ta.arr[free] + tol.time_margin < start) & (ta.ddl[free] >= completion)]
        if eligible.size < pi:
            return ProbeResult(False, None, frozenset())

        incumbent_windows = [start - ta.arr[s] for s in incumbents]
        if start > prev_finish + tol.time_margin and all(
            w > tol.time_margin for w in incumbent_windows
        ):
            demands = ta.bits[eligible] / (ta.rate[eligible] * (start - ta.arr[eligible]))
            order = np.lexsort((eligible, demands))
            chosen = eligible[order[:pi]]
            total = (
                base_demand
                + float(demands[order[:pi]].sum())
                + sum(
                    ta.bits[s] / (ta.rate[s] * w)
                    for s, w in zip(incumbents, incumbent_windows)
                )
            )
            if total <= budget * (1.0 + tol.rel_bandwidth):
                return ProbeResult(True, float(start), frozenset(int(c) for c in chosen))
        candidates.pop(0)
    return ProbeResult(False, None, frozenset())


def _rebuild(
    scenario: Scenario,
    members: list[set[int]],
    starts: list[float],
    bandwidths: Mapping[int, float],
) -> Schedule:
    assignment = {tid: n for n, ids in enumerate(members) for tid in ids}
    return Schedule(
        assignment=assignment,
        batch_starts=tuple(starts),
        bandwidths={tid: bandwidths[tid] for tid in assignment},
    )


def _augment_pass(
    scenario: Scenario,
    schedule: Schedule,
    config: Optional[SolverConfig],
    tol: Tolerances,
    inject_clock: Optional[float] = None,
    inject_ids: frozenset[int] = frozenset(),
) -> Schedule:
    ta = _TaskArrays(scenario)
    scheduled = set(schedule.assignment)
    free = {t.id for t in scenario.tasks} - scheduled - set(inject_ids)
    members, starts = _compact(schedule)
    if len(members) <= 1 or (not free and not inject_ids):
        return schedule
    bw = dict(schedule.bandwidths)
    cap = horizon_cap(scenario)
    budget = scenario.total_bandwidth
    pending = set(inject_ids)
    changed = False

    def static_need(ids: Sequence[int], start: float) -> dict[int, float]:
        return {s: float(ta.bits[s] / (ta.rate[s] * (start - ta.arr[s]))) for s in ids}

    def demand_outside(skip: Optional[int]) -> float:
        return sum(
            ta.bits[s] / (ta.rate[s] * (starts[n] - ta.arr[s]))
            for n, ids in enumerate(members)
            if n != skip
            for s in ids
        )

    def apply(new_members, new_starts, new_bw, admitted) -> bool:
        nonlocal members, starts, bw, free, changed
        candidate = _rebuild(scenario, new_members, new_starts, new_bw)
        # the static probe prices exactly what the checker checks, so this
        # never fires; it guards the output contract all the same
        if not check_schedule(scenario, candidate, tol).is_feasible:
            return False
        members, starts, bw = new_members, new_starts, new_bw
        free -= admitted
        changed = True
        return True

    i = 0
    while i < len(members) - 1:
        if pending and inject_clock is not None and starts[i] >= inject_clock:
            free |= pending  # stored locally until a checkpoint passes the clock
            pending = set()
        if not free:
            i += 1
            continue
        prev_finish = starts[i] + batch_delay(len(members[i]), scenario.delay_model)

        # enlarge the successor batch, pulling its start earlier to make room
        bound = starts[i + 2] if i + 2 < len(members) else cap
        base = demand_outside(i + 1)

        def enlarge(pi: int) -> ProbeResult:
            return _static_probe(
                ta, sorted(free), sorted(members[i + 1]), base, prev_finish,
                bound, budget, pi, starts[i + 1], tol,
            )

        star, cache = _bisect_admissions(enlarge, len(free))
        result = cache[star]
        if star > 0 and result.feasible and result.new_start is not None:
            new_members = [set(m) for m in members]
            new_members[i + 1] |= result.admitted
            new_starts = list(starts)
            new_starts[i + 1] = result.new_start
            new_bw = dict(bw)
            new_bw.update(static_need(new_members[i + 1], result.new_start))
            apply(new_members, new_starts, new_bw, result.admitted)

        # stack brand-new batches into the idle gap before the successor;
        # every admission consumes unscheduled tasks, so this terminates
        while free:
            base = demand_outside(None)

            def insert(pi: int) -> ProbeResult:
                return _static_probe(
                    ta, sorted(free), (), base, prev_finish,
                    starts[i + 1], budget, pi, None, tol,
                )

            star, cache = _bisect_admissions(insert, len(free))
            result = cache[star]
            if star == 0 or not result.feasible or result.new_start is None:
                break
            new_members = [set(m) for m in members]
            new_members.insert(i + 1, set(result.admitted))
            new_starts = list(starts)
            new_starts.insert(i + 1, result.new_start)
            new_bw = dict(bw)
            new_bw.update(static_need(result.admitted, result.new_start))
            if not apply(new_members, new_starts, new_bw, result.admitted):
                break
        i += 1

    if not changed:
        return schedule
    return _rebuild(scenario, members, starts, bw)


def augment(
    scenario: Scenario,
    schedule: Schedule,
    config: Optional[SolverConfig] = None,
    tol: Tolerances = Tolerances(),
) -> Schedule:
    """Admit unscheduled tasks into existing batches via spectrum holes.

    Every originally scheduled task keeps its batch and still meets its
    deadline; throughput never decreases; the output passes check_schedule.
    """
    return _augment_pass(scenario, schedule, config, tol)


def admit_online(
    scenario: Scenario,
    schedule: Schedule,
    new_tasks: Sequence[Task],
    arrival_clock: float,
    config: Optional[SolverConfig] = None,
    tol: Tolerances = Tolerances(),
) -> Schedule:
    """Fold newly arrived tasks into the hole-admission pass.

    New tasks are held back until the first checkpoint at or after
    ``arrival_clock`` and then compete for holes exactly like originally
    unscheduled tasks. Returns a schedule over the extended task set
    (original tasks followed by ``new_tasks``).
    """
    for t in new_tasks:
        if t.arrival < arrival_clock:
            raise ValueError(f"task {t.id}: arrival precedes the admission clock")
    extended = Scenario(
        tasks=scenario.tasks + tuple(new_tasks),
        total_bandwidth=scenario.total_bandwidth,
        noise_power=scenario.noise_power,
        delay_model=scenario.delay_model,
        seed=scenario.seed,
        prng=scenario.prng,
    )
    return _augment_pass(
        extended,
        schedule,
        config,
        tol,
        inject_clock=arrival_clock,
        inject_ids=frozenset(t.id for t in new_tasks),
    )
