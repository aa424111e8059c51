"""
Scenario runners: single simulation, stigmatization sweep, cost-by-alpha
control grid, control subset comparison and equilibrium report.

Every runner returns a ResultTable whose summary has one row per scenario
cell, in configuration order, converged or not.
"""

import logging
from typing import Callable, Dict, List

import pandas as pd

from tb_stigma.analysis.equilibria import classify_endemic
from tb_stigma.analysis.optimal_control import (
    CostWeights,
    forward_backward_sweep,
    stationarity_report,
)
from tb_stigma.data.config import Scenario, ScenarioConfig
from tb_stigma.data.processor import ResultProcessor, ResultTable
from tb_stigma.model.core import CONTROLS, basic_reproduction_number, state_field
from tb_stigma.model.integrate import integrate_forward

# Configure logging
logger = logging.getLogger(__name__)

ENDPOINT_COLUMNS = ["E_tf", "I_S_tf", "I_N_tf", "T_tf", "S_tf", "N_tf"]
UNCONTROLLED_LABEL = "uncontrolled"


class ScenarioError(RuntimeError):
    """A scenario cell failed; ``cell`` names it."""

    def __init__(self, cell: str, message: str):
        super().__init__(f"{cell}: {message}")
        self.cell = cell


def alpha_label(alpha: float) -> str:
    return f"alpha={alpha:g}"


def cell_label(cost: float, alpha: float) -> str:
    return f"C={cost:g},alpha={alpha:g}"


def mask_label(mask) -> str:
    if not any(mask):
        return UNCONTROLLED_LABEL
    return "+".join(name for name, on in zip(CONTROLS, mask) if on)


def _run_cell(label: str, action: Callable):
    logger.info(f"Running cell {label}")
    try:
        return action()
    except Exception as e:
        logger.error(f"Scenario cell {label} failed: {str(e)}")
        raise ScenarioError(label, str(e)) from e


def run_single(config: ScenarioConfig) -> ResultTable:
    """Integrate the uncontrolled model once with the configured parameters."""
    params = config.params
    label = alpha_label(params.alpha)
    traj = _run_cell(label, lambda: integrate_forward(state_field(params), config.initial, config.grid))

    record = {"alpha": params.alpha, "R0": basic_reproduction_number(params)}
    record.update(ResultProcessor.endpoint_record(traj))
    record["min_value"] = traj.min_value
    series = ResultProcessor.merge_series(config.grid, [ResultProcessor.trajectory_series(label, traj)])
    return ResultTable("single", pd.DataFrame([record]), series)


def run_alpha_sweep(config: ScenarioConfig) -> ResultTable:
    """
    Uncontrolled runs for each stigmatization level.

    Summary columns are ``alpha, R0`` followed by the endpoint compartments
    and ``N_tf``; the series holds total infected per alpha.
    """
    records, frames = [], []
    for alpha in config.alpha_values:
        params = config.params.replace(alpha=alpha)
        label = alpha_label(alpha)
        traj = _run_cell(label, lambda: integrate_forward(state_field(params), config.initial, config.grid))

        endpoint = ResultProcessor.endpoint_record(traj)
        record = {"alpha": alpha, "R0": basic_reproduction_number(params)}
        record.update({column: endpoint[column] for column in ENDPOINT_COLUMNS})
        records.append(record)
        frames.append(ResultProcessor.trajectory_series(label, traj, compartments=False))

    summary = pd.DataFrame(records, columns=["alpha", "R0", *ENDPOINT_COLUMNS])
    series = ResultProcessor.merge_series(config.grid, frames)
    return ResultTable("alpha_sweep", summary, series)


def _solution_record(solution, weights, bounds, params) -> Dict[str, float]:
    report = stationarity_report(solution, weights, bounds, params)
    record = {
        "objective": solution.objective,
        "iterations": solution.iterations,
        "converged": solution.converged,
        "relative_change": solution.relative_change,
        "max_interior_gradient": report.max_interior_gradient,
        "max_interior_scaled": report.max_interior_scaled,
    }
    record.update(ResultProcessor.endpoint_record(solution.state_traj))
    for name, mean in zip(CONTROLS, solution.control_traj.time_average()):
        record[f"mean_{name}"] = float(mean)
    return record


def run_control_grid(config: ScenarioConfig) -> ResultTable:
    """Forward-backward sweep on every (cost level, alpha) cell."""
    records, frames = [], []
    for cost in config.cost_levels:
        for alpha in config.grid_alpha_values:
            params = config.params.replace(alpha=alpha)
            weights = CostWeights.uniform(cost)
            bounds = config.bounds_for(params)
            label = cell_label(cost, alpha)
            solution = _run_cell(label, lambda: forward_backward_sweep(
                params, weights, bounds, config.grid, config.initial,
                max_iterations=config.solver.max_iterations,
                tolerance=config.solver.tolerance,
                relaxation=config.solver.relaxation,
                gradient_tolerance=config.solver.gradient_tolerance,
            ))
            if not solution.converged:
                logger.warning(f"Cell {label} did not converge")

            record = {"cost": cost, "alpha": alpha, "R0": basic_reproduction_number(params),
                      "u1_upper": bounds.upper[0], "u3_upper": bounds.upper[2]}
            record.update(_solution_record(solution, weights, bounds, params))
            records.append(record)
            frames.append(ResultProcessor.control_series(label, solution.control_traj))

    summary = pd.DataFrame(records)
    series = ResultProcessor.merge_series(config.grid, frames)
    return ResultTable("control_grid", summary, series)


def run_subset_comparison(config: ScenarioConfig) -> ResultTable:
    """
    Sweeps restricted to subsets of the controls.

    With ``include_uncontrolled`` an all-inactive run is added first so the
    orderings against the uncontrolled baseline can be read from one table.
    """
    params = config.params
    weights = config.weights
    masks: List = list(config.subset_masks)
    if config.include_uncontrolled and (False, False, False, False) not in masks:
        masks.insert(0, (False, False, False, False))

    records, frames = [], []
    for mask in masks:
        label = mask_label(mask)
        bounds = config.bounds_for(params, mask)
        solution = _run_cell(label, lambda: forward_backward_sweep(
            params, weights, bounds, config.grid, config.initial,
            max_iterations=config.solver.max_iterations,
            tolerance=config.solver.tolerance,
            relaxation=config.solver.relaxation,
            gradient_tolerance=config.solver.gradient_tolerance,
        ))
        record = {"label": label}
        record.update({f"{name}_active": int(on) for name, on in zip(CONTROLS, mask)})
        record.update(_solution_record(solution, weights, bounds, params))
        records.append(record)
        frames.append(ResultProcessor.trajectory_series(label, solution.state_traj, solution.control_traj))

    summary = pd.DataFrame(records)
    series = ResultProcessor.merge_series(config.grid, frames)
    return ResultTable("subset_comparison", summary, series)


def run_equilibria(config: ScenarioConfig) -> ResultTable:
    """Equilibrium report of the configured parameters as a table."""
    report = _run_cell(alpha_label(config.params.alpha), lambda: classify_endemic(config.params))
    if not report.oracle_agrees:
        logger.warning(f"{report.classification.value} disagrees with the numeric scan")
    return ResultTable("equilibria", report.to_frame())


RUNNERS: Dict[Scenario, Callable[[ScenarioConfig], ResultTable]] = {
    Scenario.SINGLE: run_single,
    Scenario.ALPHA_SWEEP: run_alpha_sweep,
    Scenario.CONTROL_GRID: run_control_grid,
    Scenario.SUBSET_COMPARISON: run_subset_comparison,
}


def run_scenario(config: ScenarioConfig) -> ResultTable:
    """Dispatch on ``config.scenario``."""
    table = RUNNERS[config.scenario](config)
    logger.info(f"Scenario {config.scenario.value} finished with {len(table.summary)} cell(s)")
    return table

