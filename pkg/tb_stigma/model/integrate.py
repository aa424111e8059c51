"""
Fixed-step fourth-order Runge-Kutta integration.

States are integrated forward from ``t0``; adjoints are integrated backward
from ``tf`` against a stored state trajectory. Controls are piecewise constant
per step and take the value stored at the left node of the step.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from tb_stigma.model.core import COMPARTMENTS, CONTROLS, as_vector

# Configure logging
logger = logging.getLogger(__name__)

POSITIVITY_TOL = 1e-6
ADJOINT_NAMES = ("lambda1", "lambda2", "lambda3", "lambda4", "lambda5")

VectorField = Callable[[float, np.ndarray], np.ndarray]


class IntegrationError(RuntimeError):
    """Non-finite value produced during an integration."""

    def __init__(self, message: str, time: Optional[float] = None):
        super().__init__(message)
        self.time = time


class PositivityError(IntegrationError):
    """A compartment dropped below the positivity tolerance."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t0 + i * h`` for ``i = 0..steps``."""

    t0: float = 0.0
    tf: float = 30.0
    steps: int = 3000

    def __post_init__(self):
        if not (np.isfinite(self.t0) and np.isfinite(self.tf)) or self.tf <= self.t0:
            raise ValueError(f"tf must be greater than t0, got t0={self.t0}, tf={self.tf}")
        if isinstance(self.steps, bool) or int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps!r}")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def h(self) -> float:
        return (self.tf - self.t0) / self.steps

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.h * np.arange(self.steps + 1)

    @classmethod
    def from_step(cls, t0: float, tf: float, h: float) -> "TimeGrid":
        """Build the grid whose spacing is closest to ``h``."""
        if h <= 0:
            raise ValueError(f"h must be positive, got {h}")
        return cls(t0, tf, max(1, int(round((tf - t0) / h))))


@dataclass(frozen=True)
class Trajectory:
    """
    Node values of a state or adjoint solution.

    ``values`` has one row per grid node and one column per component.
    """

    grid: TimeGrid
    values: np.ndarray
    columns: Sequence[str] = COMPARTMENTS
    min_value: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != self.grid.steps + 1:
            raise ValueError(
                f"trajectory needs {self.grid.steps + 1} rows, got shape {values.shape}"
            )
        if values.shape[1] != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} columns, got {values.shape[1]}")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, list(self.columns).index(name)]

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def total_infected(self) -> np.ndarray:
        """E + I_S + I_N at every node (state trajectories only)."""
        return self.values[:, 1] + self.values[:, 2] + self.values[:, 3]

    def total_population(self) -> np.ndarray:
        return self.values.sum(axis=1)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=list(self.columns))
        frame.insert(0, "time", self.grid.times)
        return frame


@dataclass(frozen=True)
class ControlTrajectory:
    """Control levels u1..u4 at every grid node."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.grid.steps + 1, len(CONTROLS)):
            raise ValueError(
                f"control trajectory needs shape {(self.grid.steps + 1, len(CONTROLS))}, "
                f"got {values.shape}"
            )
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: TimeGrid, controls) -> "ControlTrajectory":
        row = as_vector(controls)
        return cls(grid, np.tile(row, (grid.steps + 1, 1)))

    @classmethod
    def zeros(cls, grid: TimeGrid) -> "ControlTrajectory":
        return cls(grid, np.zeros((grid.steps + 1, len(CONTROLS))))

    def time_average(self) -> np.ndarray:
        """Trapezoid mean of each control over the horizon."""
        integral = trapezoid(self.values, dx=self.grid.h, axis=0)
        return integral / (self.grid.tf - self.grid.t0)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=list(CONTROLS))
        frame.insert(0, "time", self.grid.times)
        return frame


def rk4_step(f: VectorField, y: np.ndarray, t: float, h: float) -> np.ndarray:
    """
    One classical Runge-Kutta step of size ``h`` (negative for backward).

    Parameters
    ----------
    f : callable
        Vector field ``f(t, y)``
    y : np.ndarray
        Value at ``t``
    t : float
        Current time
    h : float
        Step size, must be non-zero

    Returns
    -------
    np.ndarray
        Value at ``t + h``
    """
    if h == 0:
        raise ValueError("step size must be non-zero")
    y = np.asarray(y, dtype=float)
    k1 = np.asarray(f(t, y), dtype=float)
    k2 = np.asarray(f(t + h / 2, y + h * k1 / 2), dtype=float)
    k3 = np.asarray(f(t + h / 2, y + h * k2 / 2), dtype=float)
    k4 = np.asarray(f(t + h, y + h * k3), dtype=float)
    y_next = y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
    if not np.all(np.isfinite(y_next)):
        raise IntegrationError(f"non-finite value after step from t={t} to t={t + h}", time=t + h)
    return y_next


def integrate_forward(
    rhs: Callable,
    initial,
    grid: TimeGrid,
    controls: Optional[ControlTrajectory] = None,
    positivity_tol: float = POSITIVITY_TOL,
) -> Trajectory:
    """
    Integrate ``rhs(t, y, u)`` forward over the grid.

    Parameters
    ----------
    rhs : callable
        Vector field taking time, state and control row (``None`` when uncontrolled)
    initial : State or array-like
        Initial state, all components non-negative
    grid : TimeGrid
        Integration grid
    controls : ControlTrajectory, optional
        Controls sampled at the left node of every step
    positivity_tol : float
        Allowed undershoot below zero before failing

    Returns
    -------
    Trajectory
        Node values with ``min_value`` set to the smallest component reached

    Raises
    ------
    PositivityError
        If a compartment falls below ``-positivity_tol``
    IntegrationError
        If a non-finite value appears
    """
    y0 = as_vector(initial)
    if np.any(y0 < 0):
        raise ValueError(f"initial state must be non-negative, got {y0}")
    if controls is not None and controls.grid != grid:
        raise ValueError("control trajectory is defined on a different grid")

    h = grid.h
    times = grid.times
    values = np.empty((grid.steps + 1, y0.size))
    values[0] = y0
    lowest = float(y0.min())

    for i in range(grid.steps):
        u = None if controls is None else controls.values[i]
        values[i + 1] = rk4_step(lambda t, y: rhs(t, y, u), values[i], times[i], h)
        step_min = float(values[i + 1].min())
        if step_min < lowest:
            lowest = step_min
            if lowest < -positivity_tol:
                t_fail = float(times[i + 1])
                logger.error(f"Positivity violated at t={t_fail}: min component {lowest}")
                raise PositivityError(
                    f"compartment dropped to {lowest} at t={t_fail}", time=t_fail
                )

    return Trajectory(grid, values, COMPARTMENTS, lowest)


def integrate_backward(
    rhs: Callable,
    terminal,
    grid: TimeGrid,
    state_traj: Trajectory,
    controls: Optional[ControlTrajectory] = None,
) -> Trajectory:
    """
    Integrate ``rhs(t, lam, y, u)`` from ``tf`` back to ``t0``.

    The step from node ``i + 1`` to node ``i`` freezes the state and control
    at node ``i``. The result is indexed forward in time.
    """
    if state_traj.grid != grid:
        raise ValueError("state trajectory is defined on a different grid")
    if controls is not None and controls.grid != grid:
        raise ValueError("control trajectory is defined on a different grid")

    lam_tf = as_vector(terminal)
    h = grid.h
    times = grid.times
    values = np.empty((grid.steps + 1, lam_tf.size))
    values[-1] = lam_tf

    for i in range(grid.steps - 1, -1, -1):
        y = state_traj.values[i]
        u = None if controls is None else controls.values[i]
        try:
            values[i] = rk4_step(lambda t, lam: rhs(t, lam, y, u), values[i + 1], times[i + 1], -h)
        except IntegrationError as e:
            logger.error(f"Adjoint integration failed near t={times[i]}: {str(e)}")
            raise

    return Trajectory(grid, values, ADJOINT_NAMES, float(values.min()))
