"""Benchmark schedulers: equal bandwidth, greedy batching, single batch.

All three return a Schedule validated by the same checker as the main
solver. Equal-bandwidth reuses the alternating pipeline with the global
budget replaced by a per-device cap of B/K applied as an eligibility mask.
Greedy batching simulates work-conserving uploads (equal instantaneous
shares of B among active uploads) and batches whatever has fully uploaded
at each checkpoint, then strips failures. Single-batch packs as many tasks
as possible into one batch over the whole horizon using the same
tentative-deadline probe as the hole-admission pass.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .holes import ProbeResult, _TaskArrays, _bisect_admissions, _probe_core
from .model import Scenario, Schedule, Tolerances, empty_schedule, horizon_cap
from .solver import SolverConfig, _solve_pipeline

__all__ = ["equal_bandwidth", "greedy_batching", "single_batch"]

# simulated uploads count as finished once this many bits remain; absorbs
# float cancellation in the remaining-bits bookkeeping
_BITS_EPS = 1e-6


def equal_bandwidth(scenario: Scenario, config: SolverConfig = SolverConfig()) -> Schedule:
    """Alternating solver under a fixed per-device sub-band of B/K.

    The global bandwidth constraint never binds (K caps of B/K each); tasks
    whose demand exceeds the cap at a batch start are simply ineligible for
    that batch.
    """
    if scenario.num_tasks == 0:
        return empty_schedule()
    cap = scenario.total_bandwidth / scenario.num_tasks
    return _solve_pipeline(scenario, config, per_task_cap=cap)


def greedy_batching(
    scenario: Scenario,
    config: Optional[SolverConfig] = None,
    tol: Tolerances = Tolerances(),
) -> Schedule:
    """Event-driven strawman: batch everything uploaded at each checkpoint.

    Uploads share the bandwidth equally among concurrently active tasks
    (recomputed at arrivals and completions). The first checkpoint is the
    first upload completion; each batch's end is the next checkpoint, and an
    idle checkpoint defers to the next completion. Deadline misses are
    stripped afterwards, then largest-demand members are stripped until the
    static bandwidth accounting holds.
    """
    k = scenario.num_tasks
    if k == 0:
        return empty_schedule()
    ta = _TaskArrays(scenario)
    bandwidth = scenario.total_bandwidth
    a, b = scenario.delay_model.per_task, scenario.delay_model.fixed

    arrival_order = sorted(range(k), key=lambda i: (ta.arr[i], i))
    remaining = ta.bits.astype(float).copy()
    active: list[int] = []
    ready: list[int] = []
    batches: list[tuple[float, list[int]]] = []
    next_idx = 0
    now = 0.0
    batch_end = -math.inf
    checkpoint: Optional[float] = None

    while True:
        events: list[tuple[float, int]] = []  # (time, priority)
        if active:
            share = bandwidth / len(active)
            ttc = min(remaining[i] / (ta.rate[i] * share) for i in active)
            events.append((now + ttc, 0))
        if checkpoint is not None:
            events.append((checkpoint, 1))
        if next_idx < k:
            events.append((float(ta.arr[arrival_order[next_idx]]), 2))
        if not events:
            break
        when, kind = min(events)

        if active:
            share = bandwidth / len(active)
            for i in active:
                remaining[i] -= ta.rate[i] * share * (when - now)
        now = when

        if kind == 0:  # upload completion(s), simultaneous ones batch together
            done = sorted(i for i in active if remaining[i] <= _BITS_EPS)
            active = [i for i in active if i not in done]
            ready.extend(done)
            if checkpoint is None and now >= batch_end:
                checkpoint = now
        elif kind == 1:  # checkpoint: assemble whatever has fully uploaded
            checkpoint = None
            if ready:
                size = len(ready)
                batches.append((now, sorted(ready)))
                ready = []
                batch_end = now + a * size + b
                checkpoint = batch_end
        else:  # arrival
            active.append(arrival_order[next_idx])
            next_idx += 1

    # strip failures: deadline misses against the as-run batch delay, then
    # causality edge cases, then largest demands until the static budget holds
    assignment: dict[int, int] = {}
    demands: dict[int, float] = {}
    starts = tuple(start for start, _ in batches)
    for n, (start, ids) in enumerate(batches):
        as_run_delay = a * len(ids) + b
        for tid in ids:
            if start + as_run_delay > ta.ddl[tid] + tol.numeric_eps * max(1.0, abs(ta.ddl[tid])):
                continue
            window = start - ta.arr[tid]
            if window <= tol.time_margin:
                continue
            assignment[tid] = n
            demands[tid] = float(ta.bits[tid] / (ta.rate[tid] * window))
    while assignment and sum(demands[t] for t in assignment) > bandwidth * (1.0 + tol.rel_bandwidth):
        worst = max(assignment, key=lambda t: (demands[t], -t))
        del assignment[worst]
        del demands[worst]

    return Schedule(
        assignment=assignment,
        batch_starts=starts,
        bandwidths={t: demands[t] for t in assignment},
    )


def single_batch(
    scenario: Scenario,
    config: Optional[SolverConfig] = None,
    tol: Tolerances = Tolerances(),
) -> Schedule:
    """Largest single batch over the whole horizon, full bandwidth.

    Bisection over the admission count with the tentative-deadline probe,
    specialized to no predecessor, no incumbent members and the horizon cap
    as the successor sentinel.
    """
    k = scenario.num_tasks
    if k == 0:
        return empty_schedule()
    ta = _TaskArrays(scenario)

    def probe(pi: int) -> ProbeResult:
        return _probe_core(
            ta=ta,
            free_ids=list(range(k)),
            next_members=[],
            residual_bits={},
            prev_finish=-math.inf,
            window_base=-math.inf,
            original_start=None,
            envelope=scenario.total_bandwidth,
            next_fixed_start=horizon_cap(scenario),
            pi=pi,
            tol=tol,
        )

    star, cache = _bisect_admissions(probe, k)
    result = cache[star]
    if star == 0 or result.new_start is None:
        return empty_schedule()
    start = result.new_start
    bandwidths = {
        tid: float(ta.bits[tid] / (ta.rate[tid] * (start - ta.arr[tid])))
        for tid in sorted(result.admitted)
    }
    return Schedule(
        assignment={tid: 0 for tid in sorted(result.admitted)},
        batch_starts=(start,),
        bandwidths=bandwidths,
    )
