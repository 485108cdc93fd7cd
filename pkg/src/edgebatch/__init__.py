"""Deadline-aware joint batching, scheduling and bandwidth allocation."""

from .baselines import equal_bandwidth, greedy_batching, single_batch
from .harness import ResultRow, SweepSpec, run_sweep, write_csv
from .holes import Checkpoint, ProbeResult, admit_online, augment, feasibility_probe, solve_checkpoint
from .model import (
    CausalityError,
    DelayModel,
    FeasibilityReport,
    MalformedScheduleError,
    Scenario,
    Schedule,
    Task,
    Tolerances,
    Violation,
    batch_delay,
    check_schedule,
    empty_schedule,
    horizon_cap,
    required_bandwidth,
    spectral_efficiency,
    throughput,
)
from .oracle import exact_solve, grid_cross_check
from .scenario import (
    GenConfig,
    ScenarioFormatError,
    generate,
    load_scenario,
    load_schedule,
    save_scenario,
    save_schedule,
)
from .solver import (
    DualResiduals,
    DualState,
    ReweightState,
    SolverConfig,
    approx_delay,
    associate_tasks,
    batch_start_times,
    initial_reweight,
    solve,
    update_duals,
    update_reweight,
)

__version__ = "0.1.0"

__all__ = [
    "CausalityError",
    "Checkpoint",
    "DelayModel",
    "DualResiduals",
    "DualState",
    "FeasibilityReport",
    "GenConfig",
    "MalformedScheduleError",
    "ProbeResult",
    "ResultRow",
    "ReweightState",
    "Scenario",
    "ScenarioFormatError",
    "Schedule",
    "SolverConfig",
    "SweepSpec",
    "Task",
    "Tolerances",
    "Violation",
    "admit_online",
    "approx_delay",
    "associate_tasks",
    "augment",
    "batch_delay",
    "batch_start_times",
    "check_schedule",
    "empty_schedule",
    "equal_bandwidth",
    "exact_solve",
    "feasibility_probe",
    "generate",
    "greedy_batching",
    "grid_cross_check",
    "horizon_cap",
    "initial_reweight",
    "load_scenario",
    "load_schedule",
    "required_bandwidth",
    "run_sweep",
    "save_scenario",
    "save_schedule",
    "single_batch",
    "solve",
    "solve_checkpoint",
    "spectral_efficiency",
    "throughput",
    "update_duals",
    "update_reweight",
    "write_csv",
]
