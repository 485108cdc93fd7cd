"""Exact brute-force reference solver for tiny instances.

Enumerates every task subset and every ordered partition of the subset
into batches; for each candidate association the batch starts are fixed by
the closed-form latest-start sweep (which is lossless: the feasible start
region is a down-set, so the componentwise-latest point exists and also
minimizes every upload sub-band). Candidates are kept iff the feasibility
checker passes, and a maximum-throughput one is returned, ties broken by
the lexicographically smallest assignment vector.

A start-time grid search over the same association is provided as the
independent cross-check of that elimination.
"""

from __future__ import annotations

from itertools import combinations, permutations
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .model import (
    Scenario,
    Schedule,
    Tolerances,
    batch_delay,
    check_schedule,
    empty_schedule,
    horizon_cap,
    required_bandwidth,
)
from .solver import batch_start_times

__all__ = [
    "exact_solve",
    "grid_cross_check",
    "ordered_partitions",
    "candidate_associations",
]

DEFAULT_MAX_K = 4


def _set_partitions(items: tuple[int, ...]) -> Iterator[list[list[int]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]
        yield part + [[first]]


def ordered_partitions(items: Iterable[int]) -> Iterator[tuple[tuple[int, ...], ...]]:
    """All ordered partitions of ``items`` into non-empty blocks."""
    items = tuple(items)
    for part in _set_partitions(items):
        blocks = [tuple(sorted(block)) for block in part]
        for perm in permutations(range(len(blocks))):
            yield tuple(blocks[i] for i in perm)


def candidate_associations(num_tasks: int) -> Iterator[tuple[tuple[int, ...], ...]]:
    """Every (subset, ordered partition) candidate, empty schedule excluded."""
    ids = tuple(range(num_tasks))
    for size in range(1, num_tasks + 1):
        for subset in combinations(ids, size):
            yield from ordered_partitions(subset)


def _assignment_key(assignment: dict[int, int], num_tasks: int) -> tuple[int, ...]:
    # unassigned sorts after any real batch index
    return tuple(assignment.get(tid, num_tasks) for tid in range(num_tasks))


def exact_solve(
    scenario: Scenario,
    max_k: int = DEFAULT_MAX_K,
    tol: Tolerances = Tolerances(),
) -> Schedule:
    """Exact maximum-throughput schedule by exhaustive enumeration.

    Refuses instances with more than ``max_k`` tasks: the candidate count is
    a sum of ordered Bell numbers over subsets and explodes combinatorially.
    """
    k = scenario.num_tasks
    if k > max_k:
        raise ValueError(f"exact enumeration refused: {k} tasks exceeds the cap {max_k}")
    best = empty_schedule()
    best_count = 0
    best_key = _assignment_key({}, k)

    for blocks in candidate_associations(k):
        assignment = {tid: n for n, block in enumerate(blocks) for tid in block}
        starts, flagged = batch_start_times(scenario, assignment, num_batches=len(blocks))
        if flagged:
            continue
        bandwidths = {
            tid: required_bandwidth(
                scenario.tasks[tid], starts[batch], scenario.noise_power, tol.time_margin
            )
            for tid, batch in assignment.items()
        }
        candidate = Schedule(assignment=assignment, batch_starts=starts, bandwidths=bandwidths)
        if not check_schedule(scenario, candidate, tol).is_feasible:
            continue
        count = len(assignment)
        key = _assignment_key(assignment, k)
        if count > best_count or (count == best_count and key < best_key):
            best, best_count, best_key = candidate, count, key
    return best


def grid_cross_check(
    scenario: Scenario,
    association: Sequence[Iterable[int]],
    resolution: float = 1e-3,
    tol: Tolerances = Tolerances(),
) -> Optional[tuple[float, ...]]:
    """Grid search over start times for a fixed ordered association.

    Dynamic program over the time grid, independent of the latest-start
    sweep: each batch may sit at any grid instant after its members'
    arrivals and early enough for their deadlines, batches must run
    back-to-back in order, and the minimum-total-bandwidth combination is
    compared against the budget. Returns that combination's starts, or None
    when no grid point works. A feasible association whose slack is smaller
    than the resolution can be missed; callers assert only at resolutions
    finer than the constructed slack.
    """
    if resolution <= 0:
        raise ValueError("resolution must be > 0")
    blocks = [tuple(sorted(block)) for block in association]
    if not blocks:
        return ()
    lo = min(t.arrival for t in scenario.tasks)
    hi = horizon_cap(scenario)
    grid = lo + resolution * np.arange(int((hi - lo) / resolution) + 1)
    slack = tol.numeric_eps

    def block_cost(block: tuple[int, ...]) -> np.ndarray:
        """Total sub-band demand per grid instant; inf where infeasible."""
        delay = batch_delay(len(block), scenario.delay_model)
        max_arr = max(scenario.tasks[t].arrival for t in block)
        min_ddl = min(scenario.tasks[t].deadline for t in block)
        ok = (grid > max_arr + tol.time_margin) & (grid + delay <= min_ddl + slack)
        cost = np.zeros(grid.size)
        for tid in block:
            task = scenario.tasks[tid]
            window = np.where(ok, grid - task.arrival, 1.0)
            cost += np.where(ok, task.payload_bits / (scenario.rate(task) * window), 0.0)
        return np.where(ok, cost, np.inf)

    def prefix_argmin(values: np.ndarray) -> np.ndarray:
        out = np.empty(values.size, dtype=int)
        best_val, best_idx = np.inf, 0
        for i, val in enumerate(values):
            if val < best_val:
                best_val, best_idx = val, i
            out[i] = best_idx
        return out

    total = block_cost(blocks[0])
    choices: list[np.ndarray] = [np.full(grid.size, -1, dtype=int)]
    for n in range(1, len(blocks)):
        prev_delay = batch_delay(len(blocks[n - 1]), scenario.delay_model)
        # latest predecessor grid index whose batch finishes by this instant
        limits = np.searchsorted(grid, grid - prev_delay + slack, side="right") - 1
        running = np.minimum.accumulate(total)
        arg = prefix_argmin(total)
        valid = limits >= 0
        safe = np.maximum(limits, 0)
        base = np.where(valid, running[safe], np.inf)
        choice = np.where(valid & np.isfinite(base), arg[safe], -1)
        total = block_cost(blocks[n]) + base
        choices.append(choice)

    budget = scenario.total_bandwidth * (1.0 + tol.rel_bandwidth)
    feasible = total <= budget
    if not feasible.any():
        return None
    idx = int(np.flatnonzero(feasible)[np.argmin(total[feasible])])
    starts_rev = [float(grid[idx])]
    for n in range(len(blocks) - 1, 0, -1):
        idx = int(choices[n][idx])
        starts_rev.append(float(grid[idx]))
    return tuple(reversed(starts_rev))
