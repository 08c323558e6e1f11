"""Command handlers behind the ``plan``, ``simulate``, ``compare`` and ``wind-preview`` subcommands."""

import logging
from pathlib import Path

import numpy as np

from quadplan.config import RunConfig
from quadplan.errors import ConvergenceError
from quadplan.services.output_writer import (
    OutputBatch, write_report, write_trajectory_csv, write_wind_csv,
)
from quadplan.services.power_energy import battery_trace, cumulative_energy
from quadplan.services.simulation import (
    BASELINE_NOTE, compare_energy, replay_plan, simulate_baseline,
)
from quadplan.services.quad_model import POSITION
from quadplan.services.trajectory import Trajectory
from quadplan.services.transcription import TrajectoryPlanner
from quadplan.services.wind_field import wind_vector

logger = logging.getLogger(__name__)


def _leg_traces(traj: Trajectory, cfg: RunConfig):
    vehicle = cfg.vehicle_config()
    power, energy = cumulative_energy(traj, vehicle.efficiency, vehicle.motor)
    battery = battery_trace(traj, vehicle.efficiency, vehicle.motor, vehicle.battery)
    return power, energy, battery


def _write_leg(traj: Trajectory, cfg: RunConfig, path: Path) -> None:
    write_trajectory_csv(traj, *_leg_traces(traj, cfg), path)


def _open_loop_error(plan: Trajectory, cfg: RunConfig) -> float:
    mission = cfg.mission_spec()
    flown = replay_plan(plan, mission, cfg.vehicle_config(), cfg.wind_model(), cfg.grid.hold)
    error = np.abs(flown.final_state[POSITION] - mission.xf[POSITION])
    logger.info("open-loop replay (%s) final position error %s m", cfg.grid.hold, error)
    return float(np.max(error))


def plan(cfg: RunConfig, out_dir: Path) -> int:
    """Solve the minimum-energy problem and write its trajectory and solver report."""
    planner = TrajectoryPlanner(cfg.vehicle_config(), cfg.wind_model(), cfg.solver)
    result = planner.plan(cfg.mission_spec(), cfg.grid.n_intervals)
    if not result.converged:
        raise ConvergenceError(result)
    power, energy, battery = _leg_traces(result.trajectory, cfg)
    report = {
        "wind_enabled": cfg.wind.enabled,
        "n_intervals": cfg.grid.n_intervals,
        "energy_J": result.objective,
        "max_defect_scaled": result.max_defect,
        "outer_iterations": len(result.history),
        "open_loop_final_position_error_m": _open_loop_error(result.trajectory, cfg),
        "final_soc_pct": float(battery.soc[-1]),
        "solver": {"status": result.status, **result.kkt.as_dict()},
    }
    with OutputBatch() as batch:
        write_trajectory_csv(result.trajectory, power, energy, battery,
                             out_dir / "plan_trajectory.csv", batch)
        write_report(report, out_dir / "plan_report.json", batch)
    return 0


def simulate(cfg: RunConfig, out_dir: Path) -> int:
    """Fly the baseline tracker and write its trajectory."""
    mission = cfg.mission_spec()
    traj = simulate_baseline(mission, cfg.vehicle_config(), cfg.wind_model(), cfg.baseline)
    error = float(np.linalg.norm(traj.final_state[POSITION] - mission.xf[POSITION]))
    logger.info("%s; final position error %.4f m", BASELINE_NOTE, error)
    if error > cfg.baseline.final_error_tol:
        logger.warning("baseline final position error %.3f m exceeds %.3f m",
                       error, cfg.baseline.final_error_tol)
    _write_leg(traj, cfg, out_dir / "baseline_trajectory.csv")
    return 0


def compare(cfg: RunConfig, out_dir: Path) -> int:
    """Plan, fly the baseline and write both trajectories plus the energy report."""
    report = compare_energy(cfg.mission_spec(), cfg.vehicle_config(), cfg.wind_model(),
                            cfg.grid.n_intervals, cfg.solver, cfg.baseline)
    report.extra["open_loop_final_position_error_m"] = _open_loop_error(
        report.optimal.trajectory, cfg)
    report.extra["n_intervals"] = cfg.grid.n_intervals
    vehicle = cfg.vehicle_config()
    with OutputBatch() as batch:
        for name, leg in (("optimal", report.optimal), ("baseline", report.baseline)):
            power, energy = cumulative_energy(leg.trajectory, vehicle.efficiency, vehicle.motor)
            write_trajectory_csv(leg.trajectory, power, energy, leg.battery,
                                 out_dir / f"{name}_trajectory.csv", batch)
        write_report(report.as_dict(), out_dir / "energy_report.json", batch)
    return 0


def wind_preview(cfg: RunConfig, out_dir: Path) -> int:
    """Sample the configured wind model over the mission horizon, enabled or not."""
    ms = cfg.mission
    n = int(round((ms.tf - ms.t0) * cfg.outputs.sample_rate))
    times = np.linspace(ms.t0, ms.tf, n + 1)
    write_wind_csv(times, wind_vector(times, cfg.wind.model()), out_dir / "wind_preview.csv")
    return 0


COMMANDS = {
    "plan": plan,
    "simulate": simulate,
    "compare": compare,
    "wind-preview": wind_preview,
}
