"""
Seeded randomized checks of the model, the equilibrium classifier and the
adjoint system.

Each check draws its inputs from a ``numpy.random.Generator`` and returns a
``CheckResult``; the command line ``verify`` entry point runs them all.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import pandas as pd

from tb_stigma.analysis.equilibria import (
    classify_endemic,
    endemic_quadratic,
    solve_endemic_numeric,
)
from tb_stigma.analysis.optimal_control import (
    ControlBounds,
    CostWeights,
    adjoint_rhs,
    hamiltonian,
)
from tb_stigma.model.core import (
    Parameters,
    basic_reproduction_number,
    controlled_field,
    population_balance,
    state_field,
)
from tb_stigma.model.integrate import TimeGrid, integrate_forward

# Configure logging
logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    draws: int
    worst: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.worst <= self.tolerance)


def random_state(rng: np.random.Generator, scale: float = 20000.0) -> np.ndarray:
    return rng.uniform(0.0, scale, size=5)


def random_controls(rng: np.random.Generator, bounds: ControlBounds) -> np.ndarray:
    return rng.uniform(bounds.lower_array, bounds.upper_array)


def random_adjoint(rng: np.random.Generator, scale: float = 5.0) -> np.ndarray:
    return rng.uniform(-scale, scale, size=5)


def random_parameters(rng: np.random.Generator, alpha: Optional[float] = None) -> Parameters:
    """Parameter draw spanning sub- and super-threshold regimes."""
    return Parameters(
        Lambda=588.0,
        beta_c=float(rng.uniform(0.05, 5.0)),
        sigma=float(rng.uniform(0.0, 1.0)),
        mu=float(rng.uniform(0.005, 0.05)),
        k=float(rng.uniform(0.005, 0.1)),
        d=float(rng.uniform(0.0, 0.2)),
        r=float(rng.uniform(0.0, 1.0)),
        p=float(rng.uniform(0.01, 1.0)),
        alpha=float(rng.uniform(0.0, 1.0)) if alpha is None else alpha,
    )


def well_separated(params: Parameters, margin: float = 0.02, gap: float = 1e-3) -> bool:
    """
    True when a draw is safely away from the classification boundaries.

    Draws with ``R0`` within ``margin`` of 1, or (for ``alpha = 0``) with the
    two quadratic roots closer than ``gap``, are rejected.
    """
    if abs(basic_reproduction_number(params) - 1.0) < margin:
        return False
    if params.alpha == 0:
        quad = endemic_quadratic(params, "consistent")
        if abs(quad.discriminant) < gap * gap:
            return False
    return True


def check_population_balance(rng: np.random.Generator, draws: int = 1000) -> CheckResult:
    """Sum of derivatives equals Lambda - mu N - d I at random points."""
    worst = 0.0
    for _ in range(draws):
        params = random_parameters(rng)
        y = random_state(rng)
        u = random_controls(rng, ControlBounds.for_params(params))
        expected = population_balance(y, params)
        for field in (controlled_field(y, np.zeros(4), params), controlled_field(y, u, params)):
            scale = max(1.0, abs(expected), params.beta_c * y.sum(), np.abs(field).max())
            error = abs(field.sum() - expected) / scale
            worst = max(worst, float(error))
    return CheckResult("population_balance", draws, worst, 1e-10)


def check_adjoint_consistency(rng: np.random.Generator, draws: int = 1000) -> CheckResult:
    """Adjoint right-hand side against central differences of -H."""
    weights = CostWeights()
    worst = 0.0
    for _ in range(draws):
        params = random_parameters(rng)
        y = random_state(rng) + 1.0
        u = random_controls(rng, ControlBounds.for_params(params))
        lam = random_adjoint(rng)
        analytic = adjoint_rhs(y, u, lam, weights, params).as_array()

        v = rng.normal(size=5)
        v /= np.linalg.norm(v)
        eps = 1e-5 * y.sum()
        fd = -(hamiltonian(y + eps * v, u, lam, weights, params)
               - hamiltonian(y - eps * v, u, lam, weights, params)) / (2 * eps)
        error = abs(analytic @ v - fd) / max(np.linalg.norm(analytic), 1e-12)
        worst = max(worst, float(error))
    return CheckResult("adjoint_consistency", draws, worst, 1e-6)


def check_positivity(rng: np.random.Generator, grid: TimeGrid, draws: int = 20,
                     alphas=(0.0, 0.5, 1.0)) -> CheckResult:
    """Minimum compartment value over random non-negative initial states."""
    worst = 0.0
    base = Parameters()
    for i in range(draws):
        params = base.replace(alpha=alphas[i % len(alphas)])
        traj = integrate_forward(state_field(params), random_state(rng), grid, positivity_tol=np.inf)
        worst = max(worst, -traj.min_value)
    return CheckResult("positivity", draws, worst, 1e-9)


def check_equilibrium_oracle(rng: np.random.Generator, draws: int = 50,
                             x_grid_size: int = 100_000) -> CheckResult:
    """Closed-form classification count against the numeric scan (alpha = 0 and 1)."""
    mismatches = 0
    done = 0
    while done < draws:
        params = random_parameters(rng, alpha=float(done % 2))
        if not well_separated(params):
            continue
        report = classify_endemic(params, x_grid_size)
        numeric = solve_endemic_numeric(params, x_grid_size)
        if len(report.points) != len(numeric):
            mismatches += 1
            logger.warning(f"Equilibrium count mismatch at {params}")
        done += 1
    return CheckResult("equilibrium_oracle", draws, float(mismatches), 0.0)


def run_checks(rng: np.random.Generator, grid: TimeGrid, draws: int = 200) -> pd.DataFrame:
    """Run every check and return one row per check."""
    results: List[CheckResult] = [
        check_population_balance(rng, draws),
        check_adjoint_consistency(rng, draws),
        check_positivity(rng, grid, max(3, draws // 20)),
        check_equilibrium_oracle(rng, max(2, draws // 4)),
    ]
    for result in results:
        level = logging.INFO if result.passed else logging.WARNING
        logger.log(level, f"{result.name}: worst {result.worst:.3e} (tolerance {result.tolerance:.0e})")
    return pd.DataFrame([{**vars(r), "passed": r.passed} for r in results])
