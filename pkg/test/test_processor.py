import numpy as np
import pandas as pd
import pytest

from tb_stigma.data.processor import (
    ResultProcessor,
    ResultTable,
    emit_csv,
    emit_plot_data,
    read_csv,
    write_series_file,
)
from tb_stigma.model.integrate import ControlTrajectory, TimeGrid, Trajectory


@pytest.fixture
def grid():
    return TimeGrid(0.0, 1.0, 4)


@pytest.fixture
def trajectory(grid):
    """Linear ramp in every compartment."""
    values = np.outer(np.linspace(1.0, 2.0, 5), [10.0, 2.0, 1.0, 0.5, 3.0])
    return Trajectory(grid, values)


def test_endpoint_record(trajectory):
    """Final compartments, N and total infected."""
    record = ResultProcessor.endpoint_record(trajectory)
    assert record["S_tf"] == pytest.approx(20.0)
    assert record["N_tf"] == pytest.approx(33.0)
    assert record["infected_tf"] == pytest.approx(7.0)


def test_trajectory_series(trajectory, grid):
    """Series columns are prefixed with the cell label."""
    controls = ControlTrajectory.constant(grid, [0.1, 0.2, 0.3, 0.4])
    frame = ResultProcessor.trajectory_series("u1+u2", trajectory, controls)
    assert "u1+u2/total_infected" in frame
    assert "u1+u2/I_N" in frame
    assert "u1+u2/N" in frame
    assert "u1+u2/u4" in frame
    np.testing.assert_allclose(frame["u1+u2/total_infected"], trajectory.total_infected())

    only_total = ResultProcessor.trajectory_series("alpha=1", trajectory, compartments=False)
    assert list(only_total.columns) == ["alpha=1/total_infected"]


def test_merge_series(trajectory, grid):
    """time column first, one row per node."""
    frames = [ResultProcessor.trajectory_series(label, trajectory, compartments=False)
              for label in ("a", "b")]
    merged = ResultProcessor.merge_series(grid, frames)
    assert list(merged.columns) == ["time", "a/total_infected", "b/total_infected"]
    assert len(merged) == grid.steps + 1


def test_duplicate_columns_rejected():
    """A table may not repeat a column."""
    summary = pd.DataFrame([[1, 2]], columns=["x", "x"])
    with pytest.raises(ValueError):
        ResultTable("broken", summary)


def test_emit_csv_round_trip(tmp_path):
    """17 significant digits survive a round trip."""
    summary = pd.DataFrame({"alpha": [0.1, 1.0 / 3.0], "R0": [np.pi, np.e]})
    table = ResultTable("demo", summary)
    path = emit_csv(table, tmp_path / "out" / "demo_summary.csv")
    assert path.exists()
    pd.testing.assert_frame_equal(read_csv(path), summary)
    assert "\r\n" not in path.read_text(encoding="utf-8")


def test_emit_csv_is_deterministic(tmp_path):
    """Same table, same bytes."""
    summary = pd.DataFrame({"a": [0.1, 0.2], "b": ["x", "y"]})
    first = emit_csv(summary, tmp_path / "first.csv")
    second = emit_csv(summary, tmp_path / "second.csv")
    assert first.read_bytes() == second.read_bytes()


def test_emit_csv_errors(tmp_path):
    """Unwritable paths raise OSError naming the path; bad parts are rejected."""
    table = ResultTable("demo", pd.DataFrame({"a": [1.0]}))
    with pytest.raises(OSError) as excinfo:
        emit_csv(table, tmp_path)
    assert str(tmp_path) in str(excinfo.value)
    with pytest.raises(ValueError):
        emit_csv(table, tmp_path / "x.csv", part="other")


def test_emit_plot_data(trajectory, grid, tmp_path):
    """One two-column file per series."""
    frames = [ResultProcessor.trajectory_series(f"alpha={a:g}", trajectory, compartments=False)
              for a in (1.0, 0.5)]
    table = ResultTable("alpha_sweep", pd.DataFrame(), ResultProcessor.merge_series(grid, frames))
    written = emit_plot_data(table, tmp_path / "plots")
    assert sorted(p.name for p in written) == ["alpha_0.5__total_infected.dat",
                                               "alpha_1__total_infected.dat"]
    data = np.loadtxt(written[0])
    assert data.shape == (grid.steps + 1, 2)
    np.testing.assert_allclose(data[:, 0], grid.times)


def test_empty_series_file(tmp_path):
    """An empty series still gets a header line."""
    path = write_series_file(tmp_path / "empty.dat", [], [])
    assert path.read_text().startswith("# time value")
