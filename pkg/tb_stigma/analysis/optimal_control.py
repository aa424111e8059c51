"""
Optimal control of the stigmatized tuberculosis model.

Objective, Hamiltonian, adjoint system, pointwise control characterization
and the forward-backward sweep solver, plus the first-order diagnostics used
to check a converged solution.

The adjoint system is derived directly from the controlled right-hand side
as ``d(lambda)/dt = -dH/dx`` with ``lambda(tf) = 0``; the dependence of the
force of infection on the instantaneous population ``N`` is included.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from tb_stigma.model.core import (
    CONTROLS,
    ControlVector,
    Parameters,
    as_vector,
    controlled_field,
    state_field,
)
from tb_stigma.model.integrate import (
    ControlTrajectory,
    IntegrationError,
    TimeGrid,
    Trajectory,
    integrate_backward,
    integrate_forward,
)

# Configure logging
logger = logging.getLogger(__name__)

# Constants
DEFAULT_LOWER = 0.01
DEFAULT_UPPER = 0.9
MAX_ITERATIONS = 500
TOLERANCE = 1e-3
RELAXATION = 0.5
GRADIENT_TOLERANCE = 1e-2
BOUND_BAND = 1e-8
# 成本梯度: E, I_S, I_N
COST_GRADIENT = np.array([0.0, 1.0, 1.0, 1.0, 0.0])


@dataclass(frozen=True)
class CostWeights:
    """Quadratic cost weights C1..C4 of the four controls."""

    C1: float = 10.0
    C2: float = 10.0
    C3: float = 10.0
    C4: float = 10.0

    def __post_init__(self):
        for name, value in zip(("C1", "C2", "C3", "C4"), self.as_array()):
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")

    def as_array(self) -> np.ndarray:
        return np.array([self.C1, self.C2, self.C3, self.C4], dtype=float)

    @classmethod
    def uniform(cls, level: float) -> "CostWeights":
        return cls(level, level, level, level)


@dataclass(frozen=True)
class ControlBounds:
    """
    Box constraints ``lower[i] <= u_i <= upper[i]``.

    Inactive controls are pinned to zero by a ``[0, 0]`` box.
    """

    lower: Tuple[float, float, float, float] = (DEFAULT_LOWER,) * 4
    upper: Tuple[float, float, float, float] = (1.0, DEFAULT_UPPER, 1.0, DEFAULT_UPPER)
    active: Tuple[bool, bool, bool, bool] = (True,) * 4

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        active = tuple(bool(v) for v in self.active)
        if not (len(lower) == len(upper) == len(active) == len(CONTROLS)):
            raise ValueError("bounds need one entry per control")
        for name, lo, up, on in zip(CONTROLS, lower, upper, active):
            if not (0.0 <= lo <= up):
                raise ValueError(f"bounds for {name} must satisfy 0 <= lower <= upper, got [{lo}, {up}]")
            if not on and up != 0.0:
                raise ValueError(f"inactive control {name} must be pinned to [0, 0]")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "active", active)

    @property
    def lower_array(self) -> np.ndarray:
        return np.array(self.lower)

    @property
    def upper_array(self) -> np.ndarray:
        return np.array(self.upper)

    @property
    def active_array(self) -> np.ndarray:
        return np.array(self.active)

    def project(self, u) -> np.ndarray:
        """Clamp controls (any leading shape) onto the box."""
        return np.clip(np.asarray(u, dtype=float), self.lower_array, self.upper_array)

    def contains(self, u, tol: float = 0.0) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lower_array - tol) and np.all(u <= self.upper_array + tol))

    def with_mask(self, active_mask: Sequence[bool]) -> "ControlBounds":
        mask = tuple(bool(m) for m in active_mask)
        if len(mask) != len(CONTROLS):
            raise ValueError(f"active mask needs {len(CONTROLS)} flags, got {len(mask)}")
        lower = tuple(lo if (on and m) else 0.0 for lo, on, m in zip(self.lower, self.active, mask))
        upper = tuple(up if (on and m) else 0.0 for up, on, m in zip(self.upper, self.active, mask))
        active = tuple(on and m for on, m in zip(self.active, mask))
        return ControlBounds(lower, upper, active)

    @classmethod
    def for_params(
        cls,
        params: Parameters,
        lower: float = DEFAULT_LOWER,
        u2_upper: float = DEFAULT_UPPER,
        u4_upper: float = DEFAULT_UPPER,
        active_mask: Sequence[bool] = (True, True, True, True),
    ) -> "ControlBounds":
        """
        Bounds keeping ``(1 + u1) alpha <= 1`` and ``(1 + u3) r <= 1``.

        When a cap falls below ``lower`` the lower bound is lowered to the cap.
        """
        alpha, r = params.alpha, params.r
        upper1 = 1.0 if alpha == 0 else min(1.0, (1.0 - alpha) / alpha)
        upper3 = 1.0 if r == 0 else min(1.0, max(0.0, (1.0 - r) / r))
        upper = (upper1, float(u2_upper), upper3, float(u4_upper))
        lows = tuple(min(float(lower), up) for up in upper)
        return cls(lows, upper).with_mask(active_mask)


@dataclass(frozen=True)
class AdjointState:
    """Costates lambda1..lambda5 ordered as (S, E, I_S, I_N, T)."""

    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda3: float = 0.0
    lambda4: float = 0.0
    lambda5: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.lambda1, self.lambda2, self.lambda3, self.lambda4, self.lambda5])

    @classmethod
    def from_array(cls, values) -> "AdjointState":
        values = np.asarray(values, dtype=float)
        if values.shape != (5,):
            raise ValueError(f"an adjoint state needs 5 components, got shape {values.shape}")
        return cls(*(float(v) for v in values))


@dataclass
class OptimalSolution:
    """Result of the forward-backward sweep."""

    state_traj: Trajectory
    adjoint_traj: Trajectory
    control_traj: ControlTrajectory
    objective: float
    iterations: int
    converged: bool
    relative_change: float = 0.0
    history: List[float] = field(default_factory=list)

    def endpoint(self) -> Dict[str, float]:
        final = self.state_traj.final
        return {
            "S_tf": float(final[0]),
            "E_tf": float(final[1]),
            "I_S_tf": float(final[2]),
            "I_N_tf": float(final[3]),
            "T_tf": float(final[4]),
            "N_tf": float(final.sum()),
            "infected_tf": float(final[1] + final[2] + final[3]),
        }


@dataclass
class ControlStationarity:
    name: str
    interior_nodes: int
    max_gradient: float
    max_scaled_gradient: float
    lower_nodes: int
    upper_nodes: int
    lower_sign_violation: float
    upper_sign_violation: float


@dataclass
class StationarityReport:
    """First-order conditions of a solution, per active control."""

    entries: Dict[str, ControlStationarity]
    converged: bool = True

    @property
    def max_interior_gradient(self) -> float:
        return max((e.max_gradient for e in self.entries.values()), default=0.0)

    @property
    def max_interior_scaled(self) -> float:
        return max((e.max_scaled_gradient for e in self.entries.values()), default=0.0)

    def sign_conditions_hold(self, tol: float = 1e-2) -> bool:
        """Scaled gradient is >= -tol at lower bounds and <= tol at upper bounds."""
        return all(
            e.lower_sign_violation <= tol and e.upper_sign_violation <= tol
            for e in self.entries.values()
        )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([vars(e) for e in self.entries.values()])


@dataclass
class VariationCheck:
    predicted: float
    observed: float

    @property
    def relative_error(self) -> float:
        return abs(self.predicted - self.observed) / max(abs(self.observed), 1e-300)


def running_cost(y, u, weights: CostWeights) -> np.ndarray:
    """E + I_S + I_N + sum(C_i / 2 * u_i**2), vectorized over nodes."""
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    infected = y[..., 1] + y[..., 2] + y[..., 3]
    return infected + 0.5 * np.sum(weights.as_array() * u * u, axis=-1)


def objective(state_traj: Trajectory, control_traj: ControlTrajectory, weights: CostWeights) -> float:
    """
    Trapezoid quadrature of the running cost over the horizon.

    Raises
    ------
    ValueError
        If the trajectories live on different grids
    """
    if state_traj.grid != control_traj.grid:
        raise ValueError(
            f"grid mismatch: state on {state_traj.grid}, controls on {control_traj.grid}"
        )
    integrand = running_cost(state_traj.values, control_traj.values, weights)
    return float(trapezoid(integrand, state_traj.grid.times))


def evaluate_objective(
    params: Parameters,
    weights: CostWeights,
    grid: TimeGrid,
    initial,
    controls: ControlTrajectory,
) -> Tuple[float, Trajectory]:
    """Forward solve under ``controls`` and return ``(J, state trajectory)``."""
    state_traj = integrate_forward(state_field(params), initial, grid, controls)
    return objective(state_traj, controls, weights), state_traj


def state_jacobian(y, u, params: Parameters) -> np.ndarray:
    """
    Jacobian ``J[..., i, j] = d g_i / d x_j`` of the controlled field.

    Vectorized over leading axes; the N = 0 guard zeroes every term that
    passes through the force of infection.
    """
    y = np.asarray(y, dtype=float)
    u = np.broadcast_to(np.asarray(u, dtype=float), y.shape[:-1] + (4,))
    S, E, IS, IN, T = (y[..., i] for i in range(5))
    u1, u2, u3, u4 = (u[..., i] for i in range(4))
    mu, k, d, p, bc = params.mu, params.k, params.d, params.p, params.beta_c

    a = (1.0 + u1) * params.alpha
    ru = (1.0 + u3) * params.r
    su = (1.0 - u4) * params.sigma

    n = S + E + IS + IN + T
    infectious = IS + IN
    inv_n = np.divide(1.0, n, out=np.zeros_like(n), where=n != 0)
    force = bc * infectious * inv_n
    # dF/dx_j
    d_noninf = -bc * infectious * inv_n * inv_n
    d_inf = bc * (n - infectious) * inv_n * inv_n
    dF = np.stack([d_noninf, d_noninf, d_inf, d_inf, d_noninf], axis=-1)

    # dg_i/dF
    g_force = np.stack([
        -S,
        S - p * E + su * T,
        a * p * E,
        (1.0 - a) * p * E,
        -su * T,
    ], axis=-1)

    jac = g_force[..., :, None] * dF[..., None, :]
    zero = np.zeros_like(S)
    progression = p * force + k
    direct = np.stack([
        np.stack([-force - mu, zero, zero, zero, zero], axis=-1),
        np.stack([force, -p * force - (mu + k), zero, zero, su * force], axis=-1),
        np.stack([zero, a * progression, -(mu + ru + d) + zero, u2 + zero, zero], axis=-1),
        np.stack([zero, (1.0 - a) * progression, zero, -(mu + d) - u2 + zero, zero], axis=-1),
        np.stack([zero, zero, ru + zero, zero, -su * force - mu], axis=-1),
    ], axis=-2)
    return jac + direct


def _adjoint_field(y, u, lam, params: Parameters) -> np.ndarray:
    jac = state_jacobian(y, u, params)
    lam = np.asarray(lam, dtype=float)
    return -(COST_GRADIENT + np.einsum("...ji,...j->...i", jac, lam))


def _coupling(y, lam, params: Parameters) -> np.ndarray:
    """Control-independent part of dH/du (the adjoint-weighted field sensitivity)."""
    y = np.asarray(y, dtype=float)
    lam = np.asarray(lam, dtype=float)
    S, E, IS, IN, T = (y[..., i] for i in range(5))
    l2, l3, l4, l5 = lam[..., 1], lam[..., 2], lam[..., 3], lam[..., 4]
    n = S + E + IS + IN + T
    inv_n = np.divide(1.0, n, out=np.zeros_like(n), where=n != 0)
    force = params.beta_c * (IS + IN) * inv_n
    return np.stack([
        (l3 - l4) * params.alpha * (params.p * force * E + params.k * E),
        (l3 - l4) * IN,
        (l5 - l3) * params.r * IS,
        (l5 - l2) * params.sigma * force * T,
    ], axis=-1)


def hamiltonian(state, controls, adjoint, weights: CostWeights, params: Parameters) -> float:
    """Running cost plus the adjoint-weighted controlled right-hand side."""
    y, u, lam = as_vector(state), as_vector(controls), as_vector(adjoint)
    return float(running_cost(y, u, weights) + lam @ controlled_field(y, u, params))


def adjoint_rhs(state, controls, adjoint, weights: CostWeights, params: Parameters) -> AdjointState:
    """Return ``d(lambda)/dt = -dH/dx`` at one point."""
    y, u, lam = as_vector(state), as_vector(controls), as_vector(adjoint)
    return AdjointState.from_array(_adjoint_field(y, u, lam, params))


def partial_controls(state, controls, adjoint, weights: CostWeights, params: Parameters) -> np.ndarray:
    """``dH/du_i = C_i u_i + coupling_i`` for the four controls, vectorized over nodes."""
    u = np.asarray(as_vector(controls), dtype=float)
    return weights.as_array() * u + _coupling(as_vector(state), as_vector(adjoint), params)


def optimal_controls(y, lam, weights: CostWeights, bounds: ControlBounds, params: Parameters) -> np.ndarray:
    """Vectorized control characterization projected onto the box."""
    unprojected = -_coupling(y, lam, params) / weights.as_array()
    return bounds.project(unprojected)


def control_update(state, adjoint, weights: CostWeights, bounds: ControlBounds,
                   params: Parameters) -> ControlVector:
    """Evaluate the characterization at one point and clamp it onto ``bounds``."""
    return ControlVector.from_array(
        optimal_controls(as_vector(state), as_vector(adjoint), weights, bounds, params)
    )


def adjoint_field(params: Parameters):
    """Build the ``rhs(t, lam, y, u)`` callable for the backward integrator."""

    def rhs(t: float, lam: np.ndarray, y: np.ndarray, u: Optional[np.ndarray]) -> np.ndarray:
        return _adjoint_field(y, np.zeros(4) if u is None else u, lam, params)

    return rhs


def solve_adjoint(params: Parameters, grid: TimeGrid, state_traj: Trajectory,
                  controls: ControlTrajectory) -> Trajectory:
    return integrate_backward(adjoint_field(params), np.zeros(5), grid, state_traj, controls)


def _interior_mask(u: np.ndarray, bounds: ControlBounds, band: float) -> np.ndarray:
    return (u > bounds.lower_array + band) & (u < bounds.upper_array - band)


def interior_gradient(y, u, lam, weights: CostWeights, bounds: ControlBounds, params: Parameters,
                      band: float = BOUND_BAND) -> float:
    """Largest |dH/du| over the nodes where a control lies strictly inside its box."""
    u = np.asarray(u, dtype=float)
    grad = partial_controls(y, u, lam, weights, params)
    return float(np.max(np.abs(grad[_interior_mask(u, bounds, band)]), initial=0.0))


def _relative_change(new: np.ndarray, old: np.ndarray, active: np.ndarray) -> float:
    if not np.any(active):
        return 0.0
    delta = np.max(np.abs(new - old), axis=0)
    scale = np.maximum(np.max(np.abs(new), axis=0), 1e-12)
    return float(np.max((delta / scale)[active]))


def forward_backward_sweep(
    params: Parameters,
    weights: CostWeights,
    bounds: ControlBounds,
    grid: TimeGrid,
    initial,
    active_mask: Optional[Sequence[bool]] = None,
    max_iterations: int = MAX_ITERATIONS,
    tolerance: float = TOLERANCE,
    relaxation: float = RELAXATION,
    gradient_tolerance: Optional[float] = GRADIENT_TOLERANCE,
) -> OptimalSolution:
    """
    Solve the optimality system by the forward-backward sweep.

    Parameters
    ----------
    params : Parameters
        Model constants
    weights : CostWeights
        Control cost weights
    bounds : ControlBounds
        Control box; inactive controls are pinned to zero
    grid : TimeGrid
        Time grid shared by state, adjoint and controls
    initial : State
        Initial state
    active_mask : sequence of bool, optional
        Further restricts the active controls
    max_iterations : int
        Sweep limit
    tolerance : float
        Relative control change declaring convergence
    relaxation : float
        Weight of the new controls in the relaxed update
    gradient_tolerance : float, optional
        Once the control change is below ``tolerance``, the projected iterate
        is accepted only when its interior |dH/du| is below this value;
        ``None`` accepts it on the control change alone

    Returns
    -------
    OptimalSolution
        The converged solution, or the best iterate flagged not converged

    Raises
    ------
    IntegrationError
        If a trajectory or control update becomes non-finite
    """
    if not 0 < relaxation <= 1:
        raise ValueError(f"relaxation must lie in (0, 1], got {relaxation}")
    if max_iterations < 1:
        raise ValueError(f"max_iterations must be positive, got {max_iterations}")
    if gradient_tolerance is not None and gradient_tolerance <= 0:
        raise ValueError(f"gradient_tolerance must be positive, got {gradient_tolerance}")
    if active_mask is not None:
        bounds = bounds.with_mask(active_mask)
    active = bounds.active_array

    rhs = state_field(params)
    controls = ControlTrajectory.constant(grid, bounds.lower_array)
    state_traj = integrate_forward(rhs, initial, grid, controls)

    if not np.any(active):
        # 無控制: 單次前向求解
        adjoint_traj = solve_adjoint(params, grid, state_traj, controls)
        value = objective(state_traj, controls, weights)
        logger.info(f"No active control; objective {value:.6g}")
        return OptimalSolution(state_traj, adjoint_traj, controls, value, 1, True, 0.0, [value])

    history = [objective(state_traj, controls, weights)]
    best = (history[0], controls)
    converged = False
    change = float("inf")
    iteration = 0

    for iteration in range(1, max_iterations + 1):
        adjoint_traj = solve_adjoint(params, grid, state_traj, controls)
        computed = optimal_controls(state_traj.values, adjoint_traj.values, weights, bounds, params)
        if not np.all(np.isfinite(computed)):
            logger.error(f"Non-finite control update at iteration {iteration}")
            raise IntegrationError(f"non-finite control update at iteration {iteration}")

        relaxed = relaxation * computed + (1.0 - relaxation) * controls.values
        change = _relative_change(relaxed, controls.values, active)

        if change < tolerance:
            candidate = ControlTrajectory(grid, computed)
            candidate_state = integrate_forward(rhs, initial, grid, candidate)
            gap = 0.0
            if gradient_tolerance is not None:
                candidate_adjoint = solve_adjoint(params, grid, candidate_state, candidate)
                gap = interior_gradient(candidate_state.values, computed, candidate_adjoint.values,
                                        weights, bounds, params)
            if gradient_tolerance is None or gap < gradient_tolerance:
                controls, state_traj = candidate, candidate_state
                history.append(objective(state_traj, controls, weights))
                converged = True
                break
            # 控制已穩定, 繼續鬆弛迭代直到內部梯度夠小
            logger.debug(f"Sweep iteration {iteration}: interior gradient {gap:.3e} above "
                         f"{gradient_tolerance:.0e}")

        controls = ControlTrajectory(grid, relaxed)
        state_traj = integrate_forward(rhs, initial, grid, controls)
        value = objective(state_traj, controls, weights)
        history.append(value)
        if value < best[0]:
            best = (value, controls)
        logger.debug(f"Sweep iteration {iteration}: change {change:.3e}, objective {value:.6g}")

    if not converged:
        logger.warning(
            f"Sweep did not converge in {max_iterations} iterations (last change {change:.3e}); "
            f"returning best iterate"
        )
        controls = best[1]
        state_traj = integrate_forward(rhs, initial, grid, controls)

    adjoint_traj = solve_adjoint(params, grid, state_traj, controls)
    value = objective(state_traj, controls, weights)
    logger.info(
        f"Sweep finished: converged={converged}, iterations={iteration}, objective={value:.6g}"
    )
    return OptimalSolution(state_traj, adjoint_traj, controls, value, iteration, converged,
                           change, history)


def stationarity_report(
    solution: OptimalSolution,
    weights: CostWeights,
    bounds: ControlBounds,
    params: Parameters,
    band: float = BOUND_BAND,
) -> StationarityReport:
    """
    Evaluate dH/du along a solution.

    Interior nodes report ``|dH/du|`` (absolute and divided by ``C_i``);
    nodes on a bound report how far the sign condition is violated
    (``dH/du >= 0`` at the lower bound, ``<= 0`` at the upper bound), in
    control units. Inactive controls are excluded.
    """
    if not solution.converged:
        logger.warning("Stationarity report requested for a non-converged solution")

    u = solution.control_traj.values
    grad = partial_controls(solution.state_traj.values, u, solution.adjoint_traj.values,
                            weights, params)
    scaled = grad / weights.as_array()
    lower, upper = bounds.lower_array, bounds.upper_array

    entries = {}
    for i, name in enumerate(CONTROLS):
        if not bounds.active[i]:
            continue
        at_lower = u[:, i] <= lower[i] + band
        at_upper = u[:, i] >= upper[i] - band
        interior = ~(at_lower | at_upper)
        entries[name] = ControlStationarity(
            name=name,
            interior_nodes=int(interior.sum()),
            max_gradient=float(np.max(np.abs(grad[interior, i]), initial=0.0)),
            max_scaled_gradient=float(np.max(np.abs(scaled[interior, i]), initial=0.0)),
            lower_nodes=int(at_lower.sum()),
            upper_nodes=int(at_upper.sum()),
            lower_sign_violation=float(np.max(-scaled[at_lower & ~at_upper, i], initial=0.0)),
            upper_sign_violation=float(np.max(scaled[at_upper & ~at_lower, i], initial=0.0)),
        )
    return StationarityReport(entries, solution.converged)


def smooth_bump(grid: TimeGrid, center: float, width: float) -> np.ndarray:
    """``exp(-((t - center) / width)**2)`` on the grid nodes."""
    return np.exp(-(((grid.times - center) / width) ** 2))


def first_variation_check(
    params: Parameters,
    weights: CostWeights,
    grid: TimeGrid,
    initial,
    controls: ControlTrajectory,
    direction: np.ndarray,
    delta: float = 1e-3,
) -> VariationCheck:
    """
    Compare the directional derivative of J with its adjoint prediction.

    ``observed`` is the central difference ``(J(u + d v) - J(u - d v)) / 2d``;
    ``predicted`` is the trapezoid integral of ``dH/du . v`` along the state
    and adjoint of ``u``.
    """
    direction = np.asarray(direction, dtype=float)
    if direction.shape != controls.values.shape:
        raise ValueError(f"direction needs shape {controls.values.shape}, got {direction.shape}")

    plus = ControlTrajectory(grid, controls.values + delta * direction)
    minus = ControlTrajectory(grid, controls.values - delta * direction)
    j_plus, _ = evaluate_objective(params, weights, grid, initial, plus)
    j_minus, _ = evaluate_objective(params, weights, grid, initial, minus)
    observed = (j_plus - j_minus) / (2.0 * delta)

    _, state_traj = evaluate_objective(params, weights, grid, initial, controls)
    adjoint_traj = solve_adjoint(params, grid, state_traj, controls)
    grad = partial_controls(state_traj.values, controls.values, adjoint_traj.values, weights, params)
    predicted = float(trapezoid(np.sum(grad * direction, axis=1), grid.times))
    return VariationCheck(predicted, observed)
