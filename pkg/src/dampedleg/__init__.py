"""Drop dynamics and energy analysis of a two-segment leg with a knee spring-damper."""

from .calibration import (
    DampingTarget,
    SweepResult,
    calibrate,
    run_table2,
    sweep_delta_h,
    target_levels,
)
from .energy import (
    EnergyBreakdown,
    WorkLoop,
    decompose_energy,
    delta_Ed,
    dissipated_energy,
    full_rejection,
    loop_area,
    truncate_to_max_compression,
    workloop_from_trajectory,
)
from .leg import (
    DamperSpec,
    LegParams,
    StanceState,
    beta_from_length,
    betadot_from,
    damper_torque,
    knee_torque,
    leg_force,
    leg_length,
)
from .simulate import (
    DropConfig,
    DropSummary,
    SimTrajectory,
    SolverSettings,
    simulate_drop,
    stance_rhs,
    touchdown_state,
)

__version__ = "0.1.0"

__all__ = [
    "DampingTarget",
    "SweepResult",
    "calibrate",
    "run_table2",
    "sweep_delta_h",
    "target_levels",
    "EnergyBreakdown",
    "WorkLoop",
    "decompose_energy",
    "delta_Ed",
    "dissipated_energy",
    "full_rejection",
    "loop_area",
    "truncate_to_max_compression",
    "workloop_from_trajectory",
    "DamperSpec",
    "LegParams",
    "StanceState",
    "beta_from_length",
    "betadot_from",
    "damper_torque",
    "knee_torque",
    "leg_force",
    "leg_length",
    "DropConfig",
    "DropSummary",
    "SimTrajectory",
    "SolverSettings",
    "simulate_drop",
    "stance_rhs",
    "touchdown_state",
]
