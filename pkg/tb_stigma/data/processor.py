"""
Result tables and their emission as CSV and plot-ready text files.
"""

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from tb_stigma.model.core import COMPARTMENTS, CONTROLS
from tb_stigma.model.integrate import ControlTrajectory, TimeGrid, Trajectory

# Configure logging
logger = logging.getLogger(__name__)

# Constants
FLOAT_FORMAT = "%.17g"
SERIES_SEPARATOR = "/"
PLOT_SUFFIX = ".dat"


@dataclass
class ResultTable:
    """
    Output of one scenario family.

    ``summary`` holds one row per scenario cell; ``series`` holds one row per
    grid node with a ``time`` column followed by ``<cell>/<quantity>`` columns.
    """

    name: str
    summary: pd.DataFrame
    series: pd.DataFrame = field(default_factory=pd.DataFrame)

    def __post_init__(self):
        for part, frame in (("summary", self.summary), ("series", self.series)):
            duplicated = frame.columns[frame.columns.duplicated()].tolist()
            if duplicated:
                raise ValueError(f"{self.name} {part} has duplicate columns {duplicated}")

    def series_names(self) -> List[str]:
        return [c for c in self.series.columns if c != "time"]


class ResultProcessor:
    """Builds summary records and series frames from trajectories."""

    @staticmethod
    def endpoint_record(state_traj: Trajectory) -> Dict[str, float]:
        """Compartment values, N and total infected at the final node."""
        final = state_traj.final
        record = {f"{name}_tf": float(value) for name, value in zip(COMPARTMENTS, final)}
        record["N_tf"] = float(final.sum())
        record["infected_tf"] = float(final[1] + final[2] + final[3])
        return record

    @staticmethod
    def trajectory_series(label: str, state_traj: Trajectory,
                          control_traj: Optional[ControlTrajectory] = None,
                          compartments: bool = True) -> pd.DataFrame:
        """
        Series columns for one scenario cell.

        Parameters
        ----------
        label : str
            Scenario cell label, used as column prefix
        state_traj : Trajectory
            State solution
        control_traj : ControlTrajectory, optional
            Control solution, adds u1..u4 columns
        compartments : bool
            Include the five compartments and N besides total infected

        Returns
        -------
        pd.DataFrame
            One row per grid node
        """
        try:
            columns = {f"{label}{SERIES_SEPARATOR}total_infected": state_traj.total_infected()}
            if compartments:
                for i, name in enumerate(COMPARTMENTS):
                    columns[f"{label}{SERIES_SEPARATOR}{name}"] = state_traj.values[:, i]
                columns[f"{label}{SERIES_SEPARATOR}N"] = state_traj.total_population()
            if control_traj is not None:
                for i, name in enumerate(CONTROLS):
                    columns[f"{label}{SERIES_SEPARATOR}{name}"] = control_traj.values[:, i]
            return pd.DataFrame(columns)

        except Exception as e:
            logger.error(f"Error building series for {label}: {str(e)}")
            raise

    @staticmethod
    def control_series(label: str, control_traj: ControlTrajectory) -> pd.DataFrame:
        """u1..u4 columns for one scenario cell."""
        return pd.DataFrame({
            f"{label}{SERIES_SEPARATOR}{name}": control_traj.values[:, i]
            for i, name in enumerate(CONTROLS)
        })

    @staticmethod
    def merge_series(grid: TimeGrid, frames: List[pd.DataFrame]) -> pd.DataFrame:
        """Concatenate cell series side by side behind a ``time`` column."""
        merged = pd.concat([pd.DataFrame({"time": grid.times}), *frames], axis=1)
        return merged


def _sanitize(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text).strip("_") or "series"


def emit_csv(table: Union[ResultTable, pd.DataFrame], path: Union[str, Path],
             part: str = "summary") -> Path:
    """
    Write a table as UTF-8 CSV with 17 significant digits.

    Parameters
    ----------
    table : ResultTable or pd.DataFrame
        Table to write
    path : str or Path
        Destination file
    part : str
        ``"summary"`` or ``"series"`` when ``table`` is a ResultTable

    Returns
    -------
    Path
        The written file

    Raises
    ------
    OSError
        If the file cannot be written, with the path in the message
    """
    path = Path(path)
    if isinstance(table, ResultTable):
        if part not in ("summary", "series"):
            raise ValueError(f"part must be 'summary' or 'series', got {part!r}")
        frame = getattr(table, part)
    else:
        frame = table

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n",
                     encoding="utf-8")
    except OSError as e:
        logger.error(f"Error writing CSV {path}: {str(e)}")
        raise OSError(f"cannot write {path}: {e.strerror or str(e)}") from e

    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def read_csv(path: Union[str, Path]) -> pd.DataFrame:
    """Read an emitted CSV back without losing precision."""
    return pd.read_csv(path, float_precision="round_trip")


def emit_plot_data(table: ResultTable, directory: Union[str, Path]) -> List[Path]:
    """
    Write one two-column ``time value`` text file per series.

    Files are named ``<cell>__<quantity>.dat`` after the series column.
    """
    directory = Path(directory)
    written = []
    try:
        directory.mkdir(parents=True, exist_ok=True)
        times = table.series["time"].to_numpy(dtype=float) if "time" in table.series else np.array([])
        for column in table.series_names():
            cell, _, quantity = column.rpartition(SERIES_SEPARATOR)
            name = f"{_sanitize(cell)}__{_sanitize(quantity)}{PLOT_SUFFIX}" if cell else \
                f"{_sanitize(quantity)}{PLOT_SUFFIX}"
            target = directory / name
            written.append(write_series_file(target, times, table.series[column].to_numpy(dtype=float)))
    except OSError as e:
        logger.error(f"Error writing plot data to {directory}: {str(e)}")
        raise OSError(f"cannot write plot data in {directory}: {e.strerror or str(e)}") from e

    logger.info(f"Wrote {len(written)} plot series to {directory}")
    return written


def write_series_file(path: Union[str, Path], times, values) -> Path:
    """Write a single ``time value`` series, also used for empty series."""
    path = Path(path)
    data = np.column_stack([np.asarray(times, dtype=float), np.asarray(values, dtype=float)])
    np.savetxt(path, data.reshape(-1, 2), fmt=FLOAT_FORMAT, header="time value")
    return path
