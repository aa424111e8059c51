"""
Tuberculosis transmission model with exogenous reinfection and stigmatization.

This module holds the model parameters, the compartment state and the
right-hand sides of the uncontrolled and controlled systems, together with
the basic reproduction number.

All array-level functions accept either a single vector (shape ``(5,)``) or a
stack of vectors (shape ``(n, 5)``) so the same code serves the integrator and
the node-wise evaluations of the optimal control module.
"""

import dataclasses
import logging
from dataclasses import dataclass, fields
from typing import Optional, Tuple, Union

import numpy as np
from scipy.linalg import eigvals

# Configure logging
logger = logging.getLogger(__name__)

# Constants
COMPARTMENTS = ("S", "E", "I_S", "I_N", "T")
CONTROLS = ("u1", "u2", "u3", "u4")
PROPORTION_TOL = 1e-12

ArrayLike = Union[np.ndarray, float]


@dataclass(frozen=True)
class Parameters:
    """
    The nine model constants, rates per year.

    Defaults are the reference values of the model description; ``alpha = 1``
    is the base model without stigmatization.
    """

    Lambda: float = 588.0
    beta_c: float = 2.0
    sigma: float = 0.9
    mu: float = 0.0235
    k: float = 0.0294
    d: float = 0.05
    r: float = 0.2906
    p: float = 0.4
    alpha: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not np.isfinite(value) or value < 0:
                raise ValueError(f"{f.name} must be a finite non-negative number, got {value!r}")
        if self.alpha > 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.sigma > 1:
            raise ValueError(f"sigma must lie in [0, 1], got {self.sigma}")
        if self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")

    def replace(self, **changes) -> "Parameters":
        """Return a copy with some fields changed (validated again)."""
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class State:
    """Compartment sizes at one time point (humans, continuous)."""

    S: float
    E: float
    I_S: float
    I_N: float
    T: float

    @property
    def N(self) -> float:
        return self.S + self.E + self.I_S + self.I_N + self.T

    @property
    def I(self) -> float:
        return self.I_S + self.I_N

    @property
    def total_infected(self) -> float:
        """E + I_S + I_N, the quantity tracked by the objective."""
        return self.E + self.I_S + self.I_N

    def is_feasible(self, tol: float = 0.0) -> bool:
        return bool(np.all(self.as_array() >= -tol))

    def as_array(self) -> np.ndarray:
        return np.array([self.S, self.E, self.I_S, self.I_N, self.T], dtype=float)

    @classmethod
    def from_array(cls, values) -> "State":
        values = np.asarray(values, dtype=float)
        if values.shape != (5,):
            raise ValueError(f"a state needs 5 components, got shape {values.shape}")
        return cls(*(float(v) for v in values))

    @classmethod
    def zeros(cls) -> "State":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Derivative:
    """Time derivatives of the five compartments (humans/year)."""

    dS: float
    dE: float
    dI_S: float
    dI_N: float
    dT: float

    @property
    def total(self) -> float:
        return self.dS + self.dE + self.dI_S + self.dI_N + self.dT

    def as_array(self) -> np.ndarray:
        return np.array([self.dS, self.dE, self.dI_S, self.dI_N, self.dT], dtype=float)

    @classmethod
    def from_array(cls, values) -> "Derivative":
        return cls(*(float(v) for v in np.asarray(values, dtype=float)))


@dataclass(frozen=True)
class ControlVector:
    """The four control levels at one time point."""

    u1: float = 0.0
    u2: float = 0.0
    u3: float = 0.0
    u4: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.u1, self.u2, self.u3, self.u4], dtype=float)

    @classmethod
    def from_array(cls, values) -> "ControlVector":
        values = np.asarray(values, dtype=float)
        if values.shape != (4,):
            raise ValueError(f"a control vector needs 4 components, got shape {values.shape}")
        return cls(*(float(v) for v in values))


ZERO_CONTROLS = np.zeros(4)


def as_vector(value) -> np.ndarray:
    """Accept a dataclass with ``as_array`` or anything array-like."""
    if hasattr(value, "as_array"):
        return value.as_array()
    return np.asarray(value, dtype=float)


def _inverse_population(n: ArrayLike) -> np.ndarray:
    # N = 0 時所有 I/N 項為 0
    n = np.asarray(n, dtype=float)
    return np.divide(1.0, n, out=np.zeros_like(n), where=n != 0)


def infection_pressure(y: np.ndarray, params: Parameters) -> np.ndarray:
    """Vectorized force of infection beta_c * I / N over the last axis."""
    y = np.asarray(y, dtype=float)
    inv_n = _inverse_population(y.sum(axis=-1))
    return params.beta_c * (y[..., 2] + y[..., 3]) * inv_n


def controlled_field(y: np.ndarray, u: np.ndarray, params: Parameters) -> np.ndarray:
    """
    Right-hand side of the controlled system.

    Parameters
    ----------
    y : np.ndarray
        States, last axis ordered as (S, E, I_S, I_N, T)
    u : np.ndarray
        Controls, last axis ordered as (u1, u2, u3, u4)
    params : Parameters
        Model constants

    Returns
    -------
    np.ndarray
        Derivatives with the same shape as ``y``

    Raises
    ------
    ValueError
        If (1 + u1) * alpha exceeds 1 anywhere
    """
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    S, E, IS, IN, T = y[..., 0], y[..., 1], y[..., 2], y[..., 3], y[..., 4]
    u1, u2, u3, u4 = u[..., 0], u[..., 1], u[..., 2], u[..., 3]

    seeking = (1.0 + u1) * params.alpha
    if np.any(seeking > 1.0 + PROPORTION_TOL):
        raise ValueError(
            f"(1 + u1) * alpha must not exceed 1, got {float(np.max(seeking))}"
        )
    treatment = (1.0 + u3) * params.r
    reinfection = (1.0 - u4) * params.sigma

    force = params.beta_c * (IS + IN) * _inverse_population(S + E + IS + IN + T)
    progression = params.p * force * E + params.k * E

    dS = params.Lambda - force * S - params.mu * S
    dE = force * S - params.p * force * E - (params.mu + params.k) * E + reinfection * force * T
    dIS = seeking * progression - (params.mu + treatment + params.d) * IS + u2 * IN
    dIN = (1.0 - seeking) * progression - (params.mu + params.d) * IN - u2 * IN
    dT = treatment * IS - reinfection * force * T - params.mu * T
    return np.stack([dS, dE, dIS, dIN, dT], axis=-1)


def base_field(y: np.ndarray, params: Parameters) -> np.ndarray:
    """Right-hand side of the uncontrolled system (controlled system at u = 0)."""
    return controlled_field(y, ZERO_CONTROLS, params)


def state_field(params: Parameters):
    """
    Build the ``rhs(t, y, u)`` callable expected by the integrator.

    ``u`` may be ``None`` for the uncontrolled model.
    """

    def rhs(t: float, y: np.ndarray, u: Optional[np.ndarray]) -> np.ndarray:
        return controlled_field(y, ZERO_CONTROLS if u is None else u, params)

    return rhs


def force_of_infection(state: State, params: Parameters) -> float:
    """Return beta_c * (I_S + I_N) / N, or 0 when N = 0."""
    return float(infection_pressure(as_vector(state), params))


def rhs_base(state: State, params: Parameters) -> Derivative:
    """Evaluate the uncontrolled system at one state."""
    return Derivative.from_array(base_field(as_vector(state), params))


def rhs_controlled(state: State, controls: ControlVector, params: Parameters) -> Derivative:
    """Evaluate the controlled system at one state and control vector."""
    return Derivative.from_array(controlled_field(as_vector(state), as_vector(controls), params))


def population_balance(y: np.ndarray, params: Parameters) -> np.ndarray:
    """Lambda - mu * N - d * (I_S + I_N), the expected sum of the derivatives."""
    y = np.asarray(y, dtype=float)
    return params.Lambda - params.mu * y.sum(axis=-1) - params.d * (y[..., 2] + y[..., 3])


def basic_reproduction_number(params: Parameters) -> float:
    """
    Basic reproduction number of the model.

    The first term is the contribution of infectious individuals seeking
    treatment, the second of those avoiding it.
    """
    mu, k, d, r = params.mu, params.k, params.d, params.r
    seeking = params.beta_c * params.alpha * k / ((mu + k) * (mu + r + d))
    avoiding = params.beta_c * (1.0 - params.alpha) * k / ((mu + k) * (mu + d))
    return seeking + avoiding


def next_generation_matrix(params: Parameters) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Build the new-infection and transition matrices at the disease-free state.

    Returns
    -------
    Tuple[np.ndarray, np.ndarray, np.ndarray]
        F, V and the next generation matrix K = F V^-1, over (E, I_S, I_N)
    """
    mu, k, d, r, alpha = params.mu, params.k, params.d, params.r, params.alpha
    F = np.array([
        [0.0, params.beta_c, params.beta_c],
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0],
    ])
    V = np.array([
        [mu + k, 0.0, 0.0],
        [-alpha * k, mu + r + d, 0.0],
        [-(1.0 - alpha) * k, 0.0, mu + d],
    ])
    K = np.linalg.solve(V.T, F.T).T
    return F, V, K


def spectral_radius_r0(params: Parameters) -> float:
    """R0 as the spectral radius of the next generation matrix."""
    _, _, K = next_generation_matrix(params)
    return float(np.max(np.abs(eigvals(K))))
