import numpy as np
import pandas as pd
import plotly.graph_objects as go
import pytest

from tb_stigma.data.processor import ResultProcessor, ResultTable
from tb_stigma.model.integrate import ControlTrajectory, TimeGrid, Trajectory
from tb_stigma.visualization.plotter import CONTROL_COLORS, ScenarioPlotter


@pytest.fixture
def subset_table():
    """Two-cell subset comparison with synthetic trajectories."""
    grid = TimeGrid(0.0, 2.0, 4)
    frames, records = [], []
    for label, scale in (("uncontrolled", 2.0), ("u1+u2+u3+u4", 1.0)):
        traj = Trajectory(grid, np.full((5, 5), scale))
        controls = ControlTrajectory.constant(grid, [0.1, 0.2, 0.3, 0.4] if scale == 1.0 else [0.0] * 4)
        frames.append(ResultProcessor.trajectory_series(label, traj, controls))
        record = {"label": label}
        record.update(ResultProcessor.endpoint_record(traj))
        records.append(record)
    return ResultTable("subset_comparison", pd.DataFrame(records),
                       ResultProcessor.merge_series(grid, frames))


def test_create_total_infected_chart(subset_table):
    """One line per cell."""
    fig = ScenarioPlotter.create_total_infected_chart(subset_table)
    assert isinstance(fig, go.Figure)
    assert len(fig.data) == 2
    assert all(trace.type == "scatter" for trace in fig.data)
    assert len(fig.data[0].x) == 5
    assert fig.layout.title.text == "Total infected (E + I_S + I_N)"


def test_create_control_chart(subset_table):
    """Four control lines in their fixed colours."""
    fig = ScenarioPlotter.create_control_chart(subset_table, "u1+u2+u3+u4")
    assert [trace.name for trace in fig.data] == ["u1", "u2", "u3", "u4"]
    assert [trace.line.color for trace in fig.data] == [CONTROL_COLORS[n] for n in ("u1", "u2", "u3", "u4")]
    assert fig.layout.title.text == "Optimal controls, u1+u2+u3+u4"


def test_create_compartment_chart(subset_table):
    """One compartment across cells; unknown compartments are rejected."""
    fig = ScenarioPlotter.create_compartment_chart(subset_table, "I_N")
    assert len(fig.data) == 2
    with pytest.raises(ValueError):
        ScenarioPlotter.create_compartment_chart(subset_table, "X")


def test_create_endpoint_bar_chart(subset_table):
    """Bars labelled by cell."""
    fig = ScenarioPlotter.create_endpoint_bar_chart(subset_table)
    assert fig.data[0].type == "bar"
    assert list(fig.data[0].x) == ["uncontrolled", "u1+u2+u3+u4"]


def test_figures_for_and_save(subset_table, tmp_path):
    """Default figures of a subset comparison, written as HTML."""
    figures = ScenarioPlotter.figures_for(subset_table)
    # total infected + 4 compartments + 2 control charts + bar chart
    assert len(figures) == 8
    path = ScenarioPlotter.save_figure(figures[0], tmp_path / "figs" / "total.html")
    assert path.exists()
    assert ScenarioPlotter.figures_for(ResultTable("equilibria", pd.DataFrame({"a": [1]}))) == []


def test_error_handling():
    """Missing series raise."""
    table = ResultTable("broken", pd.DataFrame({"a": [1]}), pd.DataFrame({"x": [1.0]}))
    with pytest.raises(KeyError):
        ScenarioPlotter.create_total_infected_chart(table)
