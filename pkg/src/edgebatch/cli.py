"""Command-line front end: generate, solve, check, oracle, sweep.

Exit codes: 0 success, 1 infeasibility findings (check), 2 usage/parse
errors and refusals.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .baselines import equal_bandwidth, greedy_batching, single_batch
from .harness import SCHEDULERS, load_sweep_spec, run_sweep, write_csv
from .holes import augment
from .model import DelayModel, check_schedule, throughput
from .oracle import DEFAULT_MAX_K, exact_solve
from .scenario import (
    GenConfig,
    ScenarioFormatError,
    generate,
    load_scenario,
    load_schedule,
    save_scenario,
    save_schedule,
)
from .solver import SolverConfig, solve

USAGE_ERROR = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgebatch",
        description="Deadline-aware batching, scheduling and bandwidth allocation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="draw a random scenario file")
    gen.add_argument("--out", required=True)
    gen.add_argument("--num-tasks", type=int, default=GenConfig.num_tasks)
    gen.add_argument("--seed", type=int, default=GenConfig.seed)
    gen.add_argument("--arrival-window", type=float, nargs=2, default=list(GenConfig.arrival_window),
                     metavar=("LO", "HI"))
    gen.add_argument("--deadline-window", type=float, nargs=2, default=list(GenConfig.deadline_window),
                     metavar=("LO", "HI"))
    gen.add_argument("--payload-bits", type=float, default=GenConfig.payload_bits)
    gen.add_argument("--snr-db", type=float, default=GenConfig.tx_snr_db)
    gen.add_argument("--mean-path-loss", type=float, default=GenConfig.mean_path_loss)
    gen.add_argument("--bandwidth", type=float, default=GenConfig.total_bandwidth)
    gen.add_argument("--delay-per-task", type=float, default=0.005)
    gen.add_argument("--delay-fixed", type=float, default=0.020)

    slv = sub.add_parser("solve", help="schedule a scenario and write the schedule file")
    slv.add_argument("--scenario", required=True)
    slv.add_argument("--scheduler", choices=[s for s in SCHEDULERS if s != "jbas+holes"],
                     default="jbas")
    slv.add_argument("--holes", action="store_true",
                     help="run the spectrum-hole admission pass on the result")
    slv.add_argument("--batch-cap", type=int, default=None)
    slv.add_argument("--out", required=True)

    chk = sub.add_parser("check", help="validate a schedule against a scenario")
    chk.add_argument("--scenario", required=True)
    chk.add_argument("--schedule", required=True)

    orc = sub.add_parser("oracle", help="exact brute-force optimum (tiny instances)")
    orc.add_argument("--scenario", required=True)
    orc.add_argument("--max-k", type=int, default=DEFAULT_MAX_K)
    orc.add_argument("--out", default=None)

    swp = sub.add_parser("sweep", help="run a parameter sweep and write CSV results")
    swp.add_argument("--spec", required=True)
    swp.add_argument("--out", required=True)
    swp.add_argument("--timing", action="store_true",
                     help="include measured wall times (breaks byte-identical reruns)")
    swp.add_argument("--workers", type=int, default=None)
    return parser


def _cmd_generate(args: argparse.Namespace) -> int:
    config = GenConfig(
        num_tasks=args.num_tasks,
        arrival_window=tuple(args.arrival_window),
        deadline_window=tuple(args.deadline_window),
        payload_bits=args.payload_bits,
        tx_snr_db=args.snr_db,
        mean_path_loss=args.mean_path_loss,
        total_bandwidth=args.bandwidth,
        delay_model=DelayModel(args.delay_per_task, args.delay_fixed),
        seed=args.seed,
    )
    save_scenario(generate(config), args.out)
    print(f"wrote scenario with {config.num_tasks} tasks to {args.out}")
    return 0


def _cmd_solve(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    config = SolverConfig(batch_cap=args.batch_cap)
    if args.scheduler == "jbas":
        schedule = solve(scenario, config)
    elif args.scheduler == "equal":
        schedule = equal_bandwidth(scenario, config)
    elif args.scheduler == "greedy":
        schedule = greedy_batching(scenario, config)
    else:
        schedule = single_batch(scenario, config)
    if args.holes:
        schedule = augment(scenario, schedule, config)
    save_schedule(schedule, args.out)
    print(
        f"{args.scheduler}{'+holes' if args.holes else ''}: scheduled "
        f"{throughput(schedule)}/{scenario.num_tasks} tasks -> {args.out}"
    )
    return 0


def _cmd_check(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    schedule = load_schedule(args.schedule)
    report = check_schedule(scenario, schedule)
    if report.is_feasible:
        print(f"feasible: {throughput(schedule)}/{scenario.num_tasks} tasks scheduled")
        return 0
    for v in report.violations:
        where = f"task={v.task_id}" if v.task_id is not None else f"batch={v.batch}"
        print(f"violation: {v.constraint} {where} magnitude={v.magnitude:.6g}")
    print(f"infeasible: {len(report.violations)} violation(s)")
    return 1


def _cmd_oracle(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    if scenario.num_tasks > args.max_k:
        print(
            f"refused: {scenario.num_tasks} tasks exceeds the enumeration cap "
            f"{args.max_k}",
            file=sys.stderr,
        )
        return USAGE_ERROR
    schedule = exact_solve(scenario, max_k=args.max_k)
    print(f"optimum: {throughput(schedule)}/{scenario.num_tasks} tasks")
    if args.out:
        save_schedule(schedule, args.out)
        print(f"wrote schedule to {args.out}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    spec = load_sweep_spec(args.spec)
    rows = run_sweep(spec, workers=args.workers)
    write_csv(rows, spec, args.out, timing=args.timing)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "check":
            return _cmd_check(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
        return _cmd_sweep(args)
    except (ScenarioFormatError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
