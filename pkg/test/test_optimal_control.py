import itertools

import numpy as np
import pytest

from tb_stigma.analysis.optimal_control import (
    AdjointState,
    ControlBounds,
    CostWeights,
    adjoint_rhs,
    control_update,
    evaluate_objective,
    first_variation_check,
    forward_backward_sweep,
    hamiltonian,
    objective,
    partial_controls,
    running_cost,
    smooth_bump,
    stationarity_report,
)
from tb_stigma.analysis.verification import check_adjoint_consistency
from tb_stigma.data.config import parse_config
from tb_stigma.model.core import ControlVector, Parameters
from tb_stigma.model.integrate import ControlTrajectory, TimeGrid, integrate_forward


@pytest.fixture
def stigma_params():
    """Reference constants with alpha = 0.7."""
    return Parameters(alpha=0.7)


@pytest.fixture
def solution(stigma_params, initial_state, short_grid):
    """Converged sweep with unit-cost weights of 10."""
    bounds = ControlBounds.for_params(stigma_params)
    return forward_backward_sweep(stigma_params, CostWeights(), bounds, short_grid, initial_state)


def test_cost_weights_validation():
    """Weights must be positive."""
    assert CostWeights.uniform(100).as_array().tolist() == [100.0] * 4
    with pytest.raises(ValueError):
        CostWeights(C1=0.0)


def test_bounds_for_params(stigma_params):
    """u1 is capped by (1 - alpha) / alpha, u3 by (1 - r) / r."""
    bounds = ControlBounds.for_params(stigma_params)
    assert bounds.upper[0] == pytest.approx(0.3 / 0.7)
    assert bounds.upper[1] == 0.9
    assert bounds.upper[2] == 1.0
    assert bounds.lower == (0.01, 0.01, 0.01, 0.01)

    base = ControlBounds.for_params(Parameters(alpha=1.0))
    assert base.upper[0] == 0.0
    assert base.lower[0] == 0.0


def test_bounds_masks(stigma_params):
    """Inactive controls are pinned to zero."""
    bounds = ControlBounds.for_params(stigma_params, active_mask=(True, True, False, False))
    assert bounds.active == (True, True, False, False)
    assert bounds.lower[2:] == (0.0, 0.0)
    assert bounds.upper[2:] == (0.0, 0.0)
    with pytest.raises(ValueError):
        ControlBounds(upper=(1.0, 0.9, 1.0, 0.9), active=(False, True, True, True))
    with pytest.raises(ValueError):
        ControlBounds(lower=(0.5, 0.0, 0.0, 0.0), upper=(0.1, 0.9, 1.0, 0.9))


def test_project(stigma_params):
    """Projection clamps every node onto the box."""
    bounds = ControlBounds.for_params(stigma_params)
    projected = bounds.project(np.array([[2.0, -1.0, 0.5, 0.95]]))
    np.testing.assert_allclose(projected, [[0.3 / 0.7, 0.01, 0.5, 0.9]])
    assert bounds.contains(projected)


def test_running_cost_and_objective(initial_state):
    """Infected plus quadratic control cost, integrated by trapezoids."""
    weights = CostWeights()
    y = initial_state.as_array()
    u = np.array([0.1, 0.2, 0.3, 0.4])
    expected = 6600.0 + 5.0 * (0.01 + 0.04 + 0.09 + 0.16)
    assert running_cost(y, u, weights) == pytest.approx(expected)

    grid = TimeGrid(0.0, 1.0, 10)
    controls = ControlTrajectory.zeros(grid)
    flat = integrate_forward(lambda t, y, u: np.zeros(5), initial_state, grid)
    assert objective(flat, controls, weights) == pytest.approx(6600.0)
    with pytest.raises(ValueError):
        objective(flat, ControlTrajectory.zeros(TimeGrid(0.0, 1.0, 5)), weights)


def test_adjoint_matches_finite_differences(stigma_params, initial_state):
    """d(lambda)/dt equals -dH/dx component by component."""
    weights = CostWeights()
    y = initial_state.as_array()
    u = ControlVector(0.2, 0.3, 0.4, 0.5)
    lam = AdjointState(-1.0, 2.0, 3.0, -0.5, 1.5)
    analytic = adjoint_rhs(y, u, lam, weights, stigma_params).as_array()
    for i in range(5):
        step = np.zeros(5)
        step[i] = 1e-2
        fd = -(hamiltonian(y + step, u, lam, weights, stigma_params)
               - hamiltonian(y - step, u, lam, weights, stigma_params)) / 2e-2
        assert analytic[i] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_adjoint_consistency_random_points():
    """Random points, random directions."""
    result = check_adjoint_consistency(np.random.default_rng(5), draws=300)
    assert result.passed, result.worst


def test_partial_controls_match_finite_differences(stigma_params, initial_state):
    """dH/du against central differences in u."""
    weights = CostWeights(10.0, 20.0, 30.0, 40.0)
    y = initial_state.as_array()
    u = np.array([0.2, 0.3, 0.4, 0.5])
    lam = np.array([-1.0, 2.0, 3.0, -0.5, 1.5])
    grad = partial_controls(y, u, lam, weights, stigma_params)
    for i in range(4):
        step = np.zeros(4)
        step[i] = 1e-4
        fd = (hamiltonian(y, u + step, lam, weights, stigma_params)
              - hamiltonian(y, u - step, lam, weights, stigma_params)) / 2e-4
        assert grad[i] == pytest.approx(fd, rel=1e-6)


def test_control_update_is_projected(stigma_params, initial_state):
    """Zero adjoint gives the lower bound, large adjoint gaps saturate."""
    weights = CostWeights()
    bounds = ControlBounds.for_params(stigma_params)
    low = control_update(initial_state, AdjointState(), weights, bounds, stigma_params)
    np.testing.assert_allclose(low.as_array(), bounds.lower_array)

    # lambda4 - lambda3 large pushes u1 and u2 up
    high = control_update(initial_state, AdjointState(0.0, 0.0, 0.0, 10.0, 0.0), weights, bounds,
                          stigma_params)
    assert high.u1 == pytest.approx(bounds.upper[0])
    assert high.u2 == pytest.approx(bounds.upper[1])


def test_sweep_converges(solution, stigma_params, short_grid):
    """Convergence, box feasibility and zero terminal adjoint."""
    bounds = ControlBounds.for_params(stigma_params)
    assert solution.converged
    assert solution.iterations <= 500
    assert bounds.contains(solution.control_traj.values, tol=1e-12)
    np.testing.assert_allclose(solution.adjoint_traj.final, 0.0)
    assert solution.state_traj.min_value >= -1e-9
    assert set(solution.endpoint()) >= {"E_tf", "I_S_tf", "I_N_tf", "T_tf", "S_tf", "N_tf"}


def test_sweep_beats_constant_controls(solution, stigma_params, initial_state, short_grid):
    """Optimal J is below the uncontrolled run and constant-control runs."""
    weights = CostWeights()
    bounds = ControlBounds.for_params(stigma_params)
    uncontrolled, _ = evaluate_objective(stigma_params, weights, short_grid, initial_state,
                                         ControlTrajectory.zeros(short_grid))
    assert solution.objective < uncontrolled

    levels = [bounds.lower_array, (bounds.lower_array + bounds.upper_array) / 2, bounds.upper_array]
    for level in levels:
        constant, _ = evaluate_objective(stigma_params, weights, short_grid, initial_state,
                                         ControlTrajectory.constant(short_grid, level))
        assert solution.objective <= constant * (1 + 1e-6)


def test_controls_relax_near_final_time(solution):
    """With zero terminal adjoint the controls fall to their lower bounds at tf."""
    final = solution.control_traj.values[-1]
    np.testing.assert_allclose(final, 0.01, atol=1e-9)


def test_stationarity(solution, stigma_params):
    """Interior gradient vanishes and bound sign conditions hold."""
    report = stationarity_report(solution, CostWeights(), ControlBounds.for_params(stigma_params),
                                 stigma_params)
    assert report.max_interior_gradient < 1e-2
    assert report.sign_conditions_hold()
    assert list(report.to_frame()["name"]) == ["u1", "u2", "u3", "u4"]


def test_first_variation_constant_controls(stigma_params, initial_state):
    """Adjoint-predicted directional derivative of J matches central differences."""
    grid = TimeGrid(0.0, 10.0, 1000)
    controls = ControlTrajectory.constant(grid, [0.1, 0.2, 0.3, 0.4])
    direction = np.zeros((grid.steps + 1, 4))
    direction[:, 1] = smooth_bump(grid, center=5.0, width=1.0)
    check = first_variation_check(stigma_params, CostWeights(), grid, initial_state, controls,
                                  direction)
    assert check.relative_error < 1e-2

    with pytest.raises(ValueError):
        first_variation_check(stigma_params, CostWeights(), grid, initial_state, controls,
                              direction[:10])


def test_sweep_without_active_controls(stigma_params, initial_state, short_grid):
    """All controls inactive: a single uncontrolled solve."""
    bounds = ControlBounds.for_params(stigma_params, active_mask=(False, False, False, False))
    result = forward_backward_sweep(stigma_params, CostWeights(), bounds, short_grid, initial_state)
    assert result.converged
    assert result.iterations == 1
    assert np.all(result.control_traj.values == 0.0)
    uncontrolled, _ = evaluate_objective(stigma_params, CostWeights(), short_grid, initial_state,
                                         ControlTrajectory.zeros(short_grid))
    assert result.objective == pytest.approx(uncontrolled, rel=1e-12)


def test_sweep_subset_mask(stigma_params, initial_state, short_grid):
    """Masked controls stay at zero."""
    bounds = ControlBounds.for_params(stigma_params)
    result = forward_backward_sweep(stigma_params, CostWeights(), bounds, short_grid, initial_state,
                                    active_mask=(False, False, True, True))
    assert np.all(result.control_traj.values[:, :2] == 0.0)
    assert result.converged


def test_sweep_argument_validation(stigma_params, initial_state, short_grid):
    """Relaxation in (0, 1] and a positive iteration limit."""
    bounds = ControlBounds.for_params(stigma_params)
    with pytest.raises(ValueError):
        forward_backward_sweep(stigma_params, CostWeights(), bounds, short_grid, initial_state,
                               relaxation=0.0)
    with pytest.raises(ValueError):
        forward_backward_sweep(stigma_params, CostWeights(), bounds, short_grid, initial_state,
                               max_iterations=0)


def test_sweep_iteration_limit(stigma_params, initial_state, short_grid):
    """Hitting the limit returns the best iterate flagged not converged."""
    bounds = ControlBounds.for_params(stigma_params)
    result = forward_backward_sweep(stigma_params, CostWeights(), bounds, short_grid, initial_state,
                                    max_iterations=1, tolerance=1e-12)
    assert not result.converged
    assert result.iterations == 1
    assert result.objective == pytest.approx(min(result.history), rel=1e-12)


def test_high_cost_sweep_is_polished(stigma_params, initial_state, short_grid):
    """At C = 1000 the unscaled interior gradient still meets the target."""
    weights = CostWeights.uniform(1000.0)
    bounds = ControlBounds.for_params(stigma_params)
    polished = forward_backward_sweep(stigma_params, weights, bounds, short_grid, initial_state)
    assert polished.converged
    report = stationarity_report(polished, weights, bounds, stigma_params)
    assert report.max_interior_gradient < 1e-2
    assert report.sign_conditions_hold()

    loose = forward_backward_sweep(stigma_params, weights, bounds, short_grid, initial_state,
                                   gradient_tolerance=None)
    assert loose.converged
    assert polished.iterations >= loose.iterations

    with pytest.raises(ValueError):
        forward_backward_sweep(stigma_params, weights, bounds, short_grid, initial_state,
                               gradient_tolerance=0.0)


def test_first_variation_at_converged_solution(stigma_params, initial_state):
    """Along a gradient-weighted bump the adjoint prediction matches J within 1%."""
    grid = TimeGrid(0.0, 10.0, 1000)
    weights = CostWeights()
    solution = forward_backward_sweep(stigma_params, weights, ControlBounds.for_params(stigma_params),
                                      grid, initial_state)
    assert solution.converged
    grad = partial_controls(solution.state_traj.values, solution.control_traj.values,
                            solution.adjoint_traj.values, weights, stigma_params)
    direction = grad * smooth_bump(grid, center=5.0, width=3.0)[:, None]
    direction /= np.abs(direction).max()

    check = first_variation_check(stigma_params, weights, grid, initial_state, solution.control_traj,
                                  direction)
    assert check.predicted > 0
    assert check.relative_error < 1e-2


def test_sweep_beats_constant_grid_over_horizon():
    """Default cell (C = 10, alpha = 0.7, 30 years): J below all 3^4 constant controls."""
    config = parse_config("", "single")
    bounds = config.bounds_for(config.params)
    solution = forward_backward_sweep(config.params, config.weights, bounds, config.grid, config.initial)
    assert solution.converged

    uncontrolled, _ = evaluate_objective(config.params, config.weights, config.grid, config.initial,
                                         ControlTrajectory.zeros(config.grid))
    assert solution.objective < uncontrolled

    levels = np.stack([bounds.lower_array, (bounds.lower_array + bounds.upper_array) / 2,
                       bounds.upper_array])
    for choice in itertools.product(range(3), repeat=4):
        level = levels[list(choice), np.arange(4)]
        constant, _ = evaluate_objective(config.params, config.weights, config.grid, config.initial,
                                         ControlTrajectory.constant(config.grid, level))
        assert solution.objective <= constant, choice
