"""CSV and JSON result files, written atomically."""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import List, Optional

import numpy as np

from quadplan.errors import OutputError
from quadplan.services.power_energy import BatteryTrace
from quadplan.services.trajectory import Trajectory

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = (
    ["t"]
    + [f"x{i}" for i in range(1, 17)]
    + [f"alpha{i}" for i in range(1, 5)]
    + ["P_total_W", "E_cum_J", "i_bat_A", "v_bat_V", "soc_pct"]
)
WIND_COLUMNS = ["t", "vx_wind", "vy_wind", "vz_wind"]
NUMBER_FORMAT = "%.12g"


class OutputBatch:
    """Stage several result files and move them into place together.

    Used as a context manager: files written with ``batch=`` land in
    temporaries and are renamed on a clean exit; any error discards them all.
    """

    def __init__(self):
        self._staged = []

    def stage(self, tmp_name: str, path: Path) -> None:
        self._staged.append((tmp_name, path))

    def discard(self) -> None:
        for tmp_name, _ in self._staged:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
        self._staged = []

    def commit(self) -> List[Path]:
        blocked = [path for _, path in self._staged if path.is_dir()]
        if blocked:
            self.discard()
            raise OutputError(blocked[0], "is a directory")
        done = []
        try:
            for tmp_name, path in self._staged:
                os.replace(tmp_name, path)
                done.append(path)
                logger.info("wrote %s", path)
        except OSError as exc:
            self.discard()
            raise OutputError(path, exc.strerror or str(exc)) from exc
        self._staged = []
        return done

    def __enter__(self) -> "OutputBatch":
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        if exc_type is None:
            self.commit()
        else:
            self.discard()
        return False


def _atomic_write(path, write, batch: Optional[OutputBatch] = None) -> Path:
    """Run ``write(handle)`` on a temporary file next to ``path``, then move it into place.

    With a ``batch`` the move waits for :meth:`OutputBatch.commit`.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    except OSError as exc:
        raise OutputError(path, exc.strerror or str(exc)) from exc
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            write(handle)
        if batch is not None:
            batch.stage(tmp_name, path)
            return path
        os.replace(tmp_name, path)
    except OSError as exc:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise OutputError(path, exc.strerror or str(exc)) from exc
    logger.info("wrote %s", path)
    return path


def _write_table(path, columns, table: np.ndarray, batch=None) -> Path:
    def write(handle):
        np.savetxt(handle, table, fmt=NUMBER_FORMAT, delimiter=",",
                   header=",".join(columns), comments="")

    return _atomic_write(path, write, batch)


def trajectory_table(traj: Trajectory, power, energy, battery: BatteryTrace) -> np.ndarray:
    """Rows of the trajectory CSV, one per sample."""
    traj.require_quadrotor()
    return np.column_stack([
        traj.times, traj.states, traj.controls,
        power, energy, battery.current, battery.v_bat, battery.soc,
    ])


def write_trajectory_csv(traj: Trajectory, power, energy, battery: BatteryTrace, path,
                         batch: Optional[OutputBatch] = None) -> Path:
    """Write a trajectory with its power, cumulative energy and battery traces.

    Columns are ``t, x1..x16, alpha1..alpha4, P_total_W, E_cum_J, i_bat_A,
    v_bat_V, soc_pct``.
    """
    return _write_table(path, TRAJECTORY_COLUMNS, trajectory_table(traj, power, energy, battery),
                        batch)


def write_wind_csv(times, wind, path) -> Path:
    return _write_table(path, WIND_COLUMNS, np.column_stack([times, wind]))


def write_report(report: dict, path, batch: Optional[OutputBatch] = None) -> Path:
    """JSON document with sorted keys, so identical runs give identical bytes."""
    text = json.dumps(report, indent=2, sort_keys=True, default=float) + "\n"
    return _atomic_write(path, lambda handle: handle.write(text), batch)
