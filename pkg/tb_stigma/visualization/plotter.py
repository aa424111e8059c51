"""
Visualization module for scenario results.
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import plotly.graph_objects as go

from tb_stigma.data.processor import SERIES_SEPARATOR, ResultTable
from tb_stigma.model.core import COMPARTMENTS, CONTROLS

# Configure logging
logger = logging.getLogger(__name__)

CONTROL_COLORS = {"u1": "black", "u2": "red", "u3": "blue", "u4": "green"}


class ScenarioPlotter:
    """Builds plotly figures from scenario ResultTables."""

    @staticmethod
    def _cells(table: ResultTable, quantity: str) -> List[str]:
        suffix = f"{SERIES_SEPARATOR}{quantity}"
        return [c[: -len(suffix)] for c in table.series_names() if c.endswith(suffix)]

    @staticmethod
    def _layout(fig: go.Figure, title: str, yaxis_title: str) -> go.Figure:
        fig.update_layout(
            title=title,
            xaxis_title="Time (years)",
            yaxis_title=yaxis_title,
            template="plotly_white",
            showlegend=True,
            hovermode="x unified",
        )
        return fig

    @staticmethod
    def create_total_infected_chart(table: ResultTable, title: Optional[str] = None) -> go.Figure:
        """One E + I_S + I_N line per scenario cell."""
        try:
            fig = go.Figure()
            times = table.series["time"]
            for cell in ScenarioPlotter._cells(table, "total_infected"):
                fig.add_trace(go.Scatter(
                    x=times,
                    y=table.series[f"{cell}{SERIES_SEPARATOR}total_infected"],
                    mode="lines",
                    name=cell,
                ))
            return ScenarioPlotter._layout(fig, title or "Total infected (E + I_S + I_N)", "Individuals")

        except Exception as e:
            logger.error(f"Error creating total infected chart: {str(e)}")
            raise

    @staticmethod
    def create_control_chart(table: ResultTable, cell: str, title: Optional[str] = None) -> go.Figure:
        """
        The four control series of one scenario cell.

        Parameters
        ----------
        table : ResultTable
            Control grid or subset comparison result
        cell : str
            Scenario cell label
        title : str, optional
            Figure title

        Returns
        -------
        go.Figure
            Plotly figure object
        """
        try:
            fig = go.Figure()
            times = table.series["time"]
            for name in CONTROLS:
                column = f"{cell}{SERIES_SEPARATOR}{name}"
                if column not in table.series:
                    continue
                fig.add_trace(go.Scatter(
                    x=times,
                    y=table.series[column],
                    mode="lines",
                    name=name,
                    line=dict(color=CONTROL_COLORS[name]),
                ))
            fig = ScenarioPlotter._layout(fig, title or f"Optimal controls, {cell}", "Control level")
            fig.update_yaxes(range=[0, 1])
            return fig

        except Exception as e:
            logger.error(f"Error creating control chart for {cell}: {str(e)}")
            raise

    @staticmethod
    def create_compartment_chart(table: ResultTable, compartment: str,
                                 cells: Optional[Sequence[str]] = None) -> go.Figure:
        """One compartment across several cells (e.g. I_N for every subset run)."""
        if compartment not in (*COMPARTMENTS, "N", "total_infected"):
            raise ValueError(f"unknown compartment {compartment!r}")
        fig = go.Figure()
        times = table.series["time"]
        for cell in cells or ScenarioPlotter._cells(table, compartment):
            fig.add_trace(go.Scatter(
                x=times,
                y=table.series[f"{cell}{SERIES_SEPARATOR}{compartment}"],
                mode="lines",
                name=cell,
            ))
        return ScenarioPlotter._layout(fig, f"{compartment} over time", "Individuals")

    @staticmethod
    def create_endpoint_bar_chart(table: ResultTable, column: str = "infected_tf") -> go.Figure:
        """Bar chart of an endpoint summary column by cell label."""
        summary = table.summary
        labels = summary["label"] if "label" in summary else summary.index.astype(str)
        fig = go.Figure()
        fig.add_trace(go.Bar(x=labels, y=summary[column]))
        fig.update_layout(
            title=f"{column} by scenario",
            xaxis_title="Scenario",
            yaxis_title=column,
            template="plotly_white",
        )
        return fig

    @staticmethod
    def save_figure(fig: go.Figure, path: Union[str, Path]) -> Path:
        """Write a figure as a standalone HTML page."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.write_html(str(path), include_plotlyjs="cdn")
        return path

    @staticmethod
    def figures_for(table: ResultTable) -> List[go.Figure]:
        """Default figures of a scenario table."""
        if table.series.empty:
            return []
        figures = [ScenarioPlotter.create_total_infected_chart(table)]
        if table.name == "control_grid":
            figures = [ScenarioPlotter.create_control_chart(table, cell)
                       for cell in ScenarioPlotter._cells(table, "u1")]
        elif table.name == "subset_comparison":
            figures.extend(ScenarioPlotter.create_compartment_chart(table, name)
                           for name in ("E", "I_S", "I_N", "T"))
            figures.extend(ScenarioPlotter.create_control_chart(table, cell)
                           for cell in ScenarioPlotter._cells(table, "u1"))
            figures.append(ScenarioPlotter.create_endpoint_bar_chart(table))
        return figures
