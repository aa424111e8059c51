"""
Equilibrium analysis of the tuberculosis model.

Two routes are provided for the endemic equilibria:

* the closed-form quadratic in ``x = I*/N*`` for ``alpha = 0`` together with
  the thresholds ``p0`` and ``Rp``, in two forms: ``"printed"`` keeps the
  coefficients derived with the frozen population ``N* = Lambda/mu``,
  while ``"consistent"`` uses the instantaneous population and matches the
  steady states of the model exactly;
* a numeric scan of the reduced scalar residual ``x - I(x)/N(x)``, valid for
  every ``alpha``, which doubles as the oracle for the closed forms.

Classification uses the consistent form; the printed values are still
computed and their disagreement with the oracle is reported.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from tb_stigma.model.core import (
    COMPARTMENTS,
    Parameters,
    State,
    as_vector,
    base_field,
    basic_reproduction_number,
)

# Configure logging
logger = logging.getLogger(__name__)

# Constants
ALWAYS_REAL = float("-inf")
RESIDUAL_TOL = 1e-8
TIE_TOL = 1e-9
SCAN_START = 1e-9
DEFAULT_GRID_SIZE = 100_000
FORMS = ("printed", "consistent")


class Classification(str, Enum):
    NO_ENDEMIC = "NoEndemic"
    UNIQUE_ENDEMIC = "UniqueEndemic"
    TWO_ENDEMIC = "TwoEndemic"
    THRESHOLD_ENDEMIC = "ThresholdEndemic"
    # 三個以上 (alpha=1 的三次方程可能出現)
    MULTIPLE_ENDEMIC = "MultipleEndemic"


EXPECTED_COUNT = {
    Classification.NO_ENDEMIC: 0,
    Classification.UNIQUE_ENDEMIC: 1,
    Classification.THRESHOLD_ENDEMIC: 1,
    Classification.TWO_ENDEMIC: 2,
}


class EquilibriumDiagnosticError(RuntimeError):
    """Closed-form classification and numeric oracle disagree."""


@dataclass(frozen=True)
class QuadraticCoefficients:
    """``x**2 + P*x + Q = 0`` in the infectious fraction ``x``."""

    P: float
    Q: float
    form: str = "printed"

    @property
    def discriminant(self) -> float:
        return self.P * self.P - 4.0 * self.Q

    def roots(self) -> np.ndarray:
        """Real roots in ascending order (a double root is listed once)."""
        disc = self.discriminant
        if disc < 0:
            return np.array([])
        if disc == 0:
            return np.array([-self.P / 2.0])
        # 避免相消誤差
        q = -0.5 * (self.P + np.copysign(np.sqrt(disc), self.P))
        if q == 0:
            return np.array([0.0])
        return np.sort(np.array([q, self.Q / q]))

    def positive_roots(self) -> np.ndarray:
        roots = self.roots()
        return roots[roots > 0]


@dataclass
class EquilibriumReport:
    """
    Classification of the endemic equilibria plus the points themselves.

    ``p0``/``Rp`` are the consistent thresholds and ``p0_printed``/``Rp_printed``
    the frozen-population ones; all four are NaN unless ``alpha = 0``.
    """

    classification: Classification
    points: List[State]
    x_values: List[float]
    residuals: List[float]
    r0: float
    p0: float = float("nan")
    Rp: float = float("nan")
    p0_printed: float = float("nan")
    Rp_printed: float = float("nan")
    oracle_count: int = 0
    oracle_agrees: bool = True
    printed_agrees: Optional[bool] = None
    disease_free: Optional[State] = None

    def __post_init__(self):
        expected = EXPECTED_COUNT.get(self.classification)
        if expected is not None and expected != len(self.points):
            raise ValueError(
                f"{self.classification.value} requires {expected} point(s), got {len(self.points)}"
            )

    def to_frame(self) -> pd.DataFrame:
        """One row for the disease-free state followed by one per endemic point."""
        rows = []
        if self.disease_free is not None:
            rows.append(("disease_free", float("nan"), self.disease_free, 0.0))
        for x, point, residual in zip(self.x_values, self.points, self.residuals):
            rows.append(("endemic", x, point, residual))

        records = []
        for kind, x, point, residual in rows:
            record = {
                "kind": kind,
                "classification": self.classification.value,
                "R0": self.r0,
                "p0": self.p0,
                "Rp": self.Rp,
                "p0_printed": self.p0_printed,
                "Rp_printed": self.Rp_printed,
                "x": x,
            }
            record.update(dict(zip(COMPARTMENTS, point.as_array())))
            record["N"] = point.N
            record["residual"] = residual
            records.append(record)
        columns = ["kind", "classification", "R0", "p0", "Rp", "p0_printed", "Rp_printed",
                   "x", *COMPARTMENTS, "N", "residual"]
        return pd.DataFrame(records, columns=columns)


@dataclass
class FormulaCrosscheck:
    """Printed versus consistent closed forms against the numeric oracle (alpha = 0)."""

    printed: QuadraticCoefficients
    consistent: QuadraticCoefficients
    printed_roots: np.ndarray
    consistent_roots: np.ndarray
    oracle_roots: np.ndarray
    printed_residuals: np.ndarray
    consistent_residuals: np.ndarray
    p0_printed: float
    p0_consistent: float
    Rp_printed: float
    Rp_consistent: float
    printed_agrees: bool = False
    consistent_agrees: bool = False
    notes: List[str] = field(default_factory=list)


def _require_alpha_zero(params: Parameters, what: str):
    if params.alpha != 0:
        raise ValueError(f"{what} holds only for alpha = 0, got alpha = {params.alpha}")


def _check_form(form: str):
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}, got {form!r}")


def disease_free_equilibrium(params: Parameters) -> State:
    """Return ``(Lambda/mu, 0, 0, 0, 0)``."""
    return State(params.Lambda / params.mu, 0.0, 0.0, 0.0, 0.0)


def steady_state_residual(state, params: Parameters) -> float:
    """Euclidean norm of the uncontrolled right-hand side at ``state``."""
    return float(np.linalg.norm(base_field(as_vector(state), params)))


def endemic_quadratic(params: Parameters, form: str = "printed") -> QuadraticCoefficients:
    """
    Coefficients of the endemic quadratic for ``alpha = 0``.

    Parameters
    ----------
    params : Parameters
        Model constants, ``alpha`` must be 0 and ``p`` positive
    form : str
        ``"printed"`` or ``"consistent"``

    Returns
    -------
    QuadraticCoefficients
        P and Q of ``x**2 + P x + Q = 0``
    """
    _require_alpha_zero(params, "the endemic quadratic")
    _check_form(form)
    if params.p <= 0 or params.beta_c <= 0:
        raise ValueError("the endemic quadratic needs p > 0 and beta_c > 0")

    mu, k, d, p, bc = params.mu, params.k, params.d, params.p, params.beta_c
    r0 = basic_reproduction_number(params)
    if form == "printed":
        P = 1.0 - mu / ((mu + d) * bc) + (mu + k) / (p * bc)
        Q = -(mu + k) * mu * (r0 - 1.0) / (p * bc * bc)
    else:
        P = -1.0 + (mu + d) / bc + (mu + d + k) / (p * bc)
        Q = -(mu + d) * (mu + k) * (r0 - 1.0) / (p * bc * bc)
    return QuadraticCoefficients(P, Q, form)


def reinfection_threshold_p0(params: Parameters, form: str = "printed") -> float:
    """
    Smallest reinfection level ``p0`` above which the quadratic has real roots.

    Returns ``ALWAYS_REAL`` when ``R0 > 1`` and ``inf`` when no threshold exists.
    """
    _require_alpha_zero(params, "the reinfection threshold")
    _check_form(form)
    mu, k, d, bc = params.mu, params.k, params.d, params.beta_c
    r0 = basic_reproduction_number(params)
    if r0 > 1:
        return ALWAYS_REAL

    if form == "printed":
        b = (mu + k) * mu * (r0 - 1.0) / (bc * bc)
        a = mu / ((mu + d) * bc) + (mu + k) / bc
        radicand = b * b / 4.0 - a * b
        if radicand < 0:
            return float("nan")
        return float(np.sqrt(radicand) + b / 2.0 - mu / ((mu + d) * bc) + (mu + k) / bc)

    # A^2 p^2 - (2AB + 4c) p + B^2 = 0
    A = bc - (mu + d)
    B = mu + d + k
    c = (mu + d) * (mu + k) * (1.0 - r0)
    if A <= 0:
        return float("inf")
    if c == 0:
        return B / A
    linear = 2.0 * A * B + 4.0 * c
    disc = linear * linear - 4.0 * A * A * B * B
    return float((linear + np.sqrt(max(disc, 0.0))) / (2.0 * A * A))


def subthreshold_Rp(params: Parameters, form: str = "printed") -> float:
    """Value of R0 at which the quadratic has a double root."""
    quad = endemic_quadratic(params, form)
    mu, k, d, p, bc = params.mu, params.k, params.d, params.p, params.beta_c
    if form == "printed":
        return 1.0 - p * bc * bc / ((mu + k) * mu) * quad.P ** 2
    return 1.0 - p * bc * bc * quad.P ** 2 / (4.0 * (mu + d) * (mu + k))


def reconstruct_steady_state(params: Parameters, x) -> np.ndarray:
    """
    Steady state implied by a force of infection ``beta_c * x``.

    All equations except the consistency ``x = I/N`` hold exactly at the
    returned state. Accepts a scalar or an array of ``x`` and returns an array
    of shape ``(..., 5)``.
    """
    x = np.asarray(x, dtype=float)
    mu, k, d, r, p = params.mu, params.k, params.d, params.r, params.p
    alpha, sigma = params.alpha, params.sigma

    force = params.beta_c * x
    S = params.Lambda / (mu + force)
    progression = p * force + k
    tau = r * alpha * progression / ((mu + r + d) * (sigma * force + mu))
    E = force * S / (p * force + mu + k - sigma * force * tau)
    I_S = alpha * progression * E / (mu + r + d)
    I_N = (1.0 - alpha) * progression * E / (mu + d)
    T = r * I_S / (sigma * force + mu)
    return np.stack([S, E, I_S, I_N, T], axis=-1)


def reduced_residual(params: Parameters, x) -> np.ndarray:
    """``x - I/N`` at the reconstructed steady state; zero at an endemic equilibrium."""
    y = reconstruct_steady_state(params, x)
    n = y.sum(axis=-1)
    fraction = np.divide(y[..., 2] + y[..., 3], n, out=np.zeros_like(n), where=n != 0)
    return np.asarray(x, dtype=float) - fraction


def scan_endemic_fractions(params: Parameters, x_grid_size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """
    Locate the roots of the reduced residual on ``(0, 1]``.

    Sign changes on the grid ``j / x_grid_size`` (plus a point just above 0)
    are polished with Brent's method. Returns the distinct roots in ascending
    order.
    """
    if x_grid_size < 1000:
        raise ValueError(f"x_grid_size must be at least 1000, got {x_grid_size}")
    if params.beta_c == 0 or params.Lambda == 0:
        return np.array([])

    grid = np.concatenate(([SCAN_START], np.arange(1, x_grid_size + 1) / x_grid_size))
    values = reduced_residual(params, grid)

    roots = []
    exact = np.flatnonzero(values == 0)
    roots.extend(grid[exact].tolist())
    brackets = np.flatnonzero(values[:-1] * values[1:] < 0)
    for i in brackets:
        root = brentq(lambda x: float(reduced_residual(params, x)), grid[i], grid[i + 1],
                      xtol=1e-15, rtol=4 * np.finfo(float).eps)
        roots.append(root)

    roots = np.sort(np.asarray(roots, dtype=float))
    if roots.size > 1:
        keep = np.concatenate(([True], np.diff(roots) > 1e-10))
        roots = roots[keep]
    return roots


def _endemic_points(params: Parameters, fractions) -> Tuple[np.ndarray, List[State]]:
    kept, states = [], []
    for x in fractions:
        state = State.from_array(reconstruct_steady_state(params, x))
        if state.I <= 0:
            continue
        residual = steady_state_residual(state, params)
        if residual >= RESIDUAL_TOL:
            logger.warning(f"Discarding steady state at x={x}: residual {residual:.3e}")
            continue
        kept.append(float(x))
        states.append(state)
    return np.asarray(kept, dtype=float), states


def solve_endemic_numeric(params: Parameters, x_grid_size: int = DEFAULT_GRID_SIZE) -> List[State]:
    """
    Endemic equilibria from the reduced-residual scan, for any ``alpha``.

    Returns an empty list when no sign change exists. Every returned state has
    ``I_S + I_N > 0`` and a steady-state residual below ``RESIDUAL_TOL``.
    """
    return _endemic_points(params, scan_endemic_fractions(params, x_grid_size))[1]


def _same_roots(roots, reference) -> bool:
    roots = np.sort(np.asarray(roots, dtype=float))
    reference = np.sort(np.asarray(reference, dtype=float))
    if roots.size != reference.size:
        return False
    return bool(np.allclose(roots, reference, rtol=1e-6, atol=0))


def _classify_count(count: int) -> Classification:
    # 變號找到的根都是單根, 切點 (ThresholdEndemic) 只由封閉式判定
    if count == 0:
        return Classification.NO_ENDEMIC
    if count == 1:
        return Classification.UNIQUE_ENDEMIC
    if count == 2:
        return Classification.TWO_ENDEMIC
    return Classification.MULTIPLE_ENDEMIC


def _classify_closed_form(params: Parameters, quad: QuadraticCoefficients, r0: float, p0: float,
                          Rp: float) -> Classification:
    if r0 > 1:
        return Classification.UNIQUE_ENDEMIC
    if r0 == 1:
        # Q = 0: 根為 0 與 -P
        return Classification.UNIQUE_ENDEMIC if quad.P < 0 else Classification.NO_ENDEMIC
    if quad.P >= 0:
        return Classification.NO_ENDEMIC
    if abs(r0 - Rp) <= TIE_TOL * max(1.0, abs(Rp)):
        return Classification.THRESHOLD_ENDEMIC
    if r0 > Rp and params.p > p0:
        return Classification.TWO_ENDEMIC
    return Classification.NO_ENDEMIC


def _closed_form_points(params: Parameters, quad: QuadraticCoefficients,
                        classification: Classification) -> np.ndarray:
    if classification == Classification.NO_ENDEMIC:
        return np.array([])
    if classification == Classification.THRESHOLD_ENDEMIC:
        return np.array([-quad.P / 2.0])
    positive = quad.positive_roots()
    if classification == Classification.UNIQUE_ENDEMIC:
        return positive[-1:]
    return positive


def classify_endemic(params: Parameters, x_grid_size: int = DEFAULT_GRID_SIZE,
                     strict: bool = False) -> EquilibriumReport:
    """
    Classify the endemic equilibrium structure and return the points.

    Parameters
    ----------
    params : Parameters
        Model constants
    x_grid_size : int
        Resolution of the numeric oracle scan
    strict : bool
        Raise instead of warning when the closed form and the oracle disagree

    Returns
    -------
    EquilibriumReport
        Classification, reconstructed points, thresholds and oracle diagnostics

    Raises
    ------
    EquilibriumDiagnosticError
        In strict mode, on closed-form versus oracle disagreement
    """
    r0 = basic_reproduction_number(params)
    oracle, oracle_states = _endemic_points(params, scan_endemic_fractions(params, x_grid_size))
    dfe = disease_free_equilibrium(params)

    if params.alpha != 0 or params.p == 0 or params.beta_c == 0:
        classification = _classify_count(len(oracle_states))
        return EquilibriumReport(
            classification=classification,
            points=oracle_states,
            x_values=oracle.tolist(),
            residuals=[steady_state_residual(s, params) for s in oracle_states],
            r0=r0,
            oracle_count=len(oracle_states),
            oracle_agrees=True,
            disease_free=dfe,
        )

    quad = endemic_quadratic(params, "consistent")
    p0 = reinfection_threshold_p0(params, "consistent")
    Rp = subthreshold_Rp(params, "consistent")
    classification = _classify_closed_form(params, quad, r0, p0, Rp)
    fractions = _closed_form_points(params, quad, classification)
    points = [State.from_array(reconstruct_steady_state(params, x)) for x in fractions]
    residuals = [steady_state_residual(s, params) for s in points]

    oracle_agrees = _same_roots(fractions, oracle)
    if classification == Classification.THRESHOLD_ENDEMIC:
        # 切點不會產生變號, 掃描找不到
        oracle_agrees = oracle_agrees or oracle.size == 0
    if any(res >= RESIDUAL_TOL for res in residuals):
        oracle_agrees = False

    printed_roots = endemic_quadratic(params, "printed").positive_roots()
    printed_agrees = _same_roots(printed_roots, oracle)

    if not oracle_agrees:
        message = (f"{classification.value} from the closed form disagrees with the scan "
                   f"({len(oracle_states)} point(s)) at {params}")
        if strict:
            logger.error(message)
            raise EquilibriumDiagnosticError(message)
        logger.warning(message)
    if not printed_agrees:
        logger.debug(f"Printed quadratic roots {printed_roots} differ from scan roots {oracle}")

    return EquilibriumReport(
        classification=classification,
        points=points,
        x_values=[float(x) for x in fractions],
        residuals=residuals,
        r0=r0,
        p0=p0,
        Rp=Rp,
        p0_printed=reinfection_threshold_p0(params, "printed"),
        Rp_printed=subthreshold_Rp(params, "printed"),
        oracle_count=len(oracle_states),
        oracle_agrees=oracle_agrees,
        printed_agrees=printed_agrees,
        disease_free=dfe,
    )


def printed_root_state(params: Parameters) -> Optional[State]:
    """
    Reconstruct the positive root of the printed quadratic with ``N* = Lambda/mu``.

    Returns ``None`` when the printed quadratic has no positive root.
    """
    roots = endemic_quadratic(params, "printed").positive_roots()
    if roots.size == 0:
        return None
    x = float(roots[-1])
    n_star = params.Lambda / params.mu
    infected = x * n_star
    force = params.beta_c * x
    S = params.Lambda / (params.mu + force)
    E = (params.mu + params.d) * infected / (params.k + params.p * force)
    return State(S, E, 0.0, infected, 0.0)


def formula_crosscheck(params: Parameters, x_grid_size: int = DEFAULT_GRID_SIZE) -> FormulaCrosscheck:
    """Compare the printed and consistent closed forms with the numeric scan."""
    _require_alpha_zero(params, "the formula cross-check")
    printed = endemic_quadratic(params, "printed")
    consistent = endemic_quadratic(params, "consistent")
    oracle = scan_endemic_fractions(params, x_grid_size)

    def residuals_for(roots):
        states = reconstruct_steady_state(params, roots) if roots.size else np.empty((0, 5))
        return np.array([steady_state_residual(s, params) for s in states])

    printed_roots = printed.positive_roots()
    consistent_roots = consistent.positive_roots()

    def agrees(roots):
        return _same_roots(roots, oracle)

    check = FormulaCrosscheck(
        printed=printed,
        consistent=consistent,
        printed_roots=printed_roots,
        consistent_roots=consistent_roots,
        oracle_roots=oracle,
        printed_residuals=residuals_for(printed_roots),
        consistent_residuals=residuals_for(consistent_roots),
        p0_printed=reinfection_threshold_p0(params, "printed"),
        p0_consistent=reinfection_threshold_p0(params, "consistent"),
        Rp_printed=subthreshold_Rp(params, "printed"),
        Rp_consistent=subthreshold_Rp(params, "consistent"),
        printed_agrees=agrees(printed_roots),
        consistent_agrees=agrees(consistent_roots),
    )

    state = printed_root_state(params)
    if state is not None:
        check.notes.append(
            f"printed root x={printed_roots[-1]:.6g} with N*=Lambda/mu has residual "
            f"{steady_state_residual(state, params):.6g}"
        )
    if not check.printed_agrees:
        check.notes.append(f"printed roots {printed_roots} differ from scan roots {oracle}")
        logger.warning(check.notes[-1])
    if not check.consistent_agrees:
        check.notes.append(f"consistent roots {consistent_roots} differ from scan roots {oracle}")
        logger.warning(check.notes[-1])
    return check
