"""
Qualitative checks on scenario results.

This module reads the ResultTables produced by the scenario runners and
derives the observations the scenario families are meant to show: peak
timing of the infected population across stigmatization levels, the
ordering of the control subsets and the response of the controls to cost.
"""

import logging
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from tb_stigma.data.processor import SERIES_SEPARATOR, ResultTable
from tb_stigma.model.core import CONTROLS

# Configure logging
logger = logging.getLogger(__name__)

ALL_CONTROLS_LABEL = "+".join(CONTROLS)


class ScenarioInsights:
    """Class for generating observations from scenario results."""

    @staticmethod
    def peak_time(times: np.ndarray, values: np.ndarray) -> Tuple[float, float]:
        """
        Time and value of the maximum of a series.

        Parameters
        ----------
        times : np.ndarray
            Grid nodes
        values : np.ndarray
            Series values

        Returns
        -------
        Tuple[float, float]
            ``(time, value)`` of the first maximum
        """
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return float("nan"), float("nan")
        i = int(np.argmax(values))
        return float(times[i]), float(values[i])

    @staticmethod
    def peak_report(table: ResultTable) -> pd.DataFrame:
        """Peak of total infected per cell of an alpha sweep."""
        times = table.series["time"].to_numpy()
        rows = []
        for _, row in table.summary.iterrows():
            column = f"alpha={row['alpha']:g}{SERIES_SEPARATOR}total_infected"
            t_peak, value = ScenarioInsights.peak_time(times, table.series[column].to_numpy())
            rows.append({"alpha": row["alpha"], "R0": row["R0"], "peak_time": t_peak,
                         "peak_value": value})
        return pd.DataFrame(rows, columns=["alpha", "R0", "peak_time", "peak_value"])

    @staticmethod
    def subset_ordering(table: ResultTable) -> Dict[str, bool]:
        """
        Endpoint orderings of a subset comparison.

        Keys present depend on the runs in the table; the all-controls run is
        compared with every other run. Stigma controls alone lengthen survival,
        so their endpoint infected count can exceed the uncontrolled one; a
        ``False`` ``stigma_beats_uncontrolled`` is logged as a warning.
        """
        summary = table.summary.set_index("label")
        infected = summary["infected_tf"]
        population = summary["N_tf"]
        checks = {}

        if ALL_CONTROLS_LABEL in summary.index:
            others = [label for label in summary.index if label != ALL_CONTROLS_LABEL]
            checks["all_controls_fewest_infected"] = bool(
                all(infected[ALL_CONTROLS_LABEL] <= infected[label] for label in others)
            )
            checks["all_controls_largest_population"] = bool(
                all(population[ALL_CONTROLS_LABEL] >= population[label] for label in others)
            )
        if "u3+u4" in summary.index and "u1+u2" in summary.index:
            checks["treatment_beats_stigma"] = bool(infected["u3+u4"] <= infected["u1+u2"])
        if "uncontrolled" in summary.index:
            for label, key in (("u1+u2", "stigma_beats_uncontrolled"),
                               ("u3+u4", "treatment_beats_uncontrolled")):
                if label in summary.index:
                    checks[key] = bool(infected[label] <= infected["uncontrolled"])
            if not checks.get("stigma_beats_uncontrolled", True):
                logger.warning(
                    f"u1+u2 ends with more infected than no control "
                    f"({infected['u1+u2']:.1f} vs {infected['uncontrolled']:.1f}, "
                    f"N {population['u1+u2']:.1f} vs {population['uncontrolled']:.1f})"
                )
        return checks

    @staticmethod
    def cost_response(table: ResultTable) -> Dict[float, bool]:
        """
        For each alpha, whether the time-averaged controls shrink as cost grows.

        Returns a flag per alpha of a control grid.
        """
        summary = table.summary
        mean_columns = [f"mean_{name}" for name in CONTROLS]
        result = {}
        for alpha, group in summary.groupby("alpha", sort=False):
            ordered = group.sort_values("cost")[mean_columns].to_numpy()
            result[float(alpha)] = bool(np.all(np.diff(ordered, axis=0) <= 1e-9))
        return result

    @staticmethod
    def generate_messages(table: ResultTable) -> List[str]:
        """Short textual observations for a scenario table."""
        messages = []
        if table.name == "alpha_sweep":
            peaks = ScenarioInsights.peak_report(table)
            for _, row in peaks.iterrows():
                messages.append(
                    f"alpha={row['alpha']:g}: R0={row['R0']:.4g}，總感染人數於 "
                    f"t={row['peak_time']:.2f} 達到高峰 {row['peak_value']:.1f}"
                )
        elif table.name == "subset_comparison":
            for check, holds in ScenarioInsights.subset_ordering(table).items():
                messages.append(f"{check}: {'成立' if holds else '不成立'}")
        elif table.name == "control_grid":
            for alpha, holds in ScenarioInsights.cost_response(table).items():
                trend = "隨成本遞減" if holds else "未隨成本遞減"
                messages.append(f"alpha={alpha:g}: 控制強度{trend}")
            unconverged = table.summary.loc[~table.summary["converged"].astype(bool)]
            if not unconverged.empty:
                messages.append(f"{len(unconverged)} 個情境未收斂")
        elif table.name == "equilibria" and not table.summary.empty:
            row = table.summary.iloc[0]
            endemic = int((table.summary["kind"] == "endemic").sum())
            messages.append(
                f"{row['classification']}，共 {endemic} 個地方性平衡點，R0={row['R0']:.4g}"
            )
        return messages
