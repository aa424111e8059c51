"""
Scenario configuration loader.

Configuration documents are TOML with dotted keys (``params.alpha = 0.5``)
or the equivalent tables. Every key is optional; missing keys take the
reference defaults below.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import toml

from tb_stigma.analysis.optimal_control import ControlBounds, CostWeights
from tb_stigma.model.core import COMPARTMENTS, Parameters, State
from tb_stigma.model.integrate import TimeGrid

# Configure logging
logger = logging.getLogger(__name__)


class Scenario(str, Enum):
    SINGLE = "single"
    ALPHA_SWEEP = "alpha_sweep"
    CONTROL_GRID = "control_grid"
    SUBSET_COMPARISON = "subset_comparison"


class ConfigError(ValueError):
    """Invalid configuration document; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class Config:
    """Default values of every recognised configuration key."""

    DEFAULTS: Dict[str, Any] = {
        # Model parameters
        "params.Lambda": 588.0,
        "params.beta_c": 2.0,
        "params.sigma": 0.9,
        "params.mu": 0.0235,
        "params.k": 0.0294,
        "params.d": 0.05,
        "params.r": 0.2906,
        "params.p": 0.4,
        "params.alpha": 0.7,
        # Initial conditions
        "initial.S": 18000.0,
        "initial.E": 5500.0,
        "initial.I_S": 700.0,
        "initial.I_N": 400.0,
        "initial.T": 400.0,
        # Time grid (steps, when given, overrides h)
        "grid.t0": 0.0,
        "grid.tf": 30.0,
        "grid.h": 0.01,
        "grid.steps": None,
        # Control costs and bounds
        "weights.C1": 10.0,
        "weights.C2": 10.0,
        "weights.C3": 10.0,
        "weights.C4": 10.0,
        "bounds.lower": 0.01,
        "bounds.u2_upper": 0.9,
        "bounds.u4_upper": 0.9,
        # Sweep solver
        "solver.max_iterations": 500,
        "solver.tolerance": 1e-3,
        "solver.relaxation": 0.5,
        "solver.gradient_tolerance": 1e-2,
        # Scenario families
        "scenario.type": None,
        "alpha_sweep.alpha_values": [1.0, 0.8, 0.6, 0.4, 0.2, 0.0],
        "control_grid.cost_levels": [10.0, 100.0, 1000.0],
        "control_grid.alpha_values": [0.3, 0.5, 0.7],
        "subsets.masks": [[1, 1, 0, 0], [0, 0, 1, 1], [1, 1, 1, 1]],
        "subsets.include_uncontrolled": True,
        "output.dir": "output",
    }

    # (lower, upper, lower inclusive, upper inclusive)
    RANGES: Dict[str, Tuple[float, float, bool, bool]] = {
        "params.sigma": (0.0, 1.0, True, True),
        "params.mu": (0.0, float("inf"), False, True),
        "params.alpha": (0.0, 1.0, True, True),
        "solver.tolerance": (0.0, float("inf"), False, True),
        "solver.relaxation": (0.0, 1.0, False, True),
        "solver.gradient_tolerance": (0.0, float("inf"), False, True),
        "bounds.lower": (0.0, float("inf"), True, True),
        "bounds.u2_upper": (0.0, float("inf"), True, True),
        "bounds.u4_upper": (0.0, float("inf"), True, True),
        "grid.h": (0.0, float("inf"), False, True),
    }

    @classmethod
    def initialize(cls, output_dir: Union[str, Path]) -> Path:
        """Create the output directory if needed."""
        path = Path(output_dir)
        path.mkdir(parents=True, exist_ok=True)
        return path


@dataclass(frozen=True)
class SolverSettings:
    max_iterations: int = 500
    tolerance: float = 1e-3
    relaxation: float = 0.5
    gradient_tolerance: float = 1e-2


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully validated scenario configuration."""

    params: Parameters
    initial: State
    grid: TimeGrid
    weights: CostWeights
    bounds: ControlBounds
    scenario: Scenario
    alpha_values: Tuple[float, ...]
    cost_levels: Tuple[float, ...]
    grid_alpha_values: Tuple[float, ...]
    subset_masks: Tuple[Tuple[bool, bool, bool, bool], ...]
    include_uncontrolled: bool
    solver: SolverSettings
    output_dir: Path
    lower_bound: float = 0.01
    u2_upper: float = 0.9
    u4_upper: float = 0.9

    def bounds_for(self, params: Parameters, active_mask=(True, True, True, True)) -> ControlBounds:
        """Control box for ``params`` (the u1 and u3 caps depend on alpha and r)."""
        return ControlBounds.for_params(params, self.lower_bound, self.u2_upper, self.u4_upper,
                                        active_mask)


def _flatten(document: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat = {}
    for key, value in document.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, dotted + "."))
        else:
            flat[dotted] = value
    return flat


def _number(key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    value = float(value)
    if value != value:
        raise ConfigError(key, "must not be NaN")
    return value


def _integer(key: str, value: Any, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(key, f"must be at least {minimum}, got {value}")
    return value


def _check_range(key: str, value: float):
    if key.startswith("params.") or key.startswith("initial.") or key.startswith("weights."):
        if value < 0:
            raise ConfigError(key, f"must be non-negative, got {value}")
    if key.startswith("weights.") and value == 0:
        raise ConfigError(key, "must be positive")
    if key in Config.RANGES:
        lo, hi, lo_incl, hi_incl = Config.RANGES[key]
        below = value < lo if lo_incl else value <= lo
        above = value > hi if hi_incl else value >= hi
        if below or above:
            left = "[" if lo_incl else "("
            right = "]" if hi_incl else ")"
            raise ConfigError(key, f"must lie in {left}{lo}, {hi}{right}, got {value}")


def _number_list(key: str, value: Any, low: float = float("-inf"), high: float = float("inf"),
                 positive: bool = False) -> Tuple[float, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError(key, f"expected a non-empty list, got {value!r}")
    numbers = tuple(_number(key, v) for v in value)
    for v in numbers:
        if v < low or v > high or (positive and v <= 0):
            raise ConfigError(key, f"value {v} out of range")
    return numbers


def _masks(key: str, value: Any) -> Tuple[Tuple[bool, bool, bool, bool], ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError(key, f"expected a non-empty list of masks, got {value!r}")
    masks = []
    for mask in value:
        if not isinstance(mask, list) or len(mask) != 4:
            raise ConfigError(key, f"each mask needs 4 flags, got {mask!r}")
        flags = []
        for flag in mask:
            if isinstance(flag, bool) or flag in (0, 1):
                flags.append(bool(flag))
            else:
                raise ConfigError(key, f"mask flags must be 0/1 or booleans, got {flag!r}")
        masks.append(tuple(flags))
    return tuple(masks)


def parse_config(
    text: str,
    default_scenario: Optional[Union[Scenario, str]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> ScenarioConfig:
    """
    Parse and validate a configuration document.

    Parameters
    ----------
    text : str
        TOML document, possibly empty
    default_scenario : Scenario or str, optional
        Scenario used when the document has no ``scenario.type``
    overrides : mapping, optional
        Dotted keys applied on top of the document (command-line flags)

    Returns
    -------
    ScenarioConfig
        Validated configuration with defaults filled in

    Raises
    ------
    ConfigError
        On malformed documents, unknown keys, out-of-range values or a
        missing scenario type
    """
    try:
        document = toml.loads(text)
    except toml.TomlDecodeError as e:
        logger.error(f"Malformed configuration document: {str(e)}")
        raise ConfigError("document", f"malformed TOML: {str(e)}") from e

    flat = _flatten(document)
    for key, value in (overrides or {}).items():
        if value is not None:
            flat[key] = value

    unknown = sorted(set(flat) - set(Config.DEFAULTS))
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration key")

    values = dict(Config.DEFAULTS)
    values.update(flat)

    scalar_keys = [k for k, v in Config.DEFAULTS.items() if isinstance(v, float)]
    for key in scalar_keys:
        values[key] = _number(key, values[key])
        _check_range(key, values[key])

    params = Parameters(**{f: values[f"params.{f}"] for f in Parameters.__dataclass_fields__})
    initial = State(*(values[f"initial.{c}"] for c in COMPARTMENTS))

    t0, tf = values["grid.t0"], values["grid.tf"]
    if tf <= t0:
        raise ConfigError("grid.tf", f"must be greater than grid.t0 = {t0}, got {tf}")
    if values["grid.steps"] is not None:
        grid = TimeGrid(t0, tf, _integer("grid.steps", values["grid.steps"]))
    else:
        grid = TimeGrid.from_step(t0, tf, values["grid.h"])

    weights = CostWeights(*(values[f"weights.C{i}"] for i in range(1, 5)))

    scenario_value = values["scenario.type"]
    if scenario_value is not None and (not isinstance(scenario_value, str) or not scenario_value):
        raise ConfigError("scenario.type", f"expected a scenario name string, got {scenario_value!r}")
    scenario_value = scenario_value or default_scenario
    if scenario_value is None:
        raise ConfigError("scenario.type", "missing scenario type")
    try:
        scenario = Scenario(scenario_value)
    except ValueError as e:
        raise ConfigError("scenario.type",
                          f"expected one of {[s.value for s in Scenario]}, got {scenario_value!r}") from e

    include_uncontrolled = values["subsets.include_uncontrolled"]
    if not isinstance(include_uncontrolled, bool):
        raise ConfigError("subsets.include_uncontrolled", "expected a boolean")
    output_dir = values["output.dir"]
    if not isinstance(output_dir, (str, Path)) or not str(output_dir):
        raise ConfigError("output.dir", f"expected a path, got {output_dir!r}")

    solver = SolverSettings(
        max_iterations=_integer("solver.max_iterations", values["solver.max_iterations"]),
        tolerance=values["solver.tolerance"],
        relaxation=values["solver.relaxation"],
        gradient_tolerance=values["solver.gradient_tolerance"],
    )

    lower, u2_upper, u4_upper = values["bounds.lower"], values["bounds.u2_upper"], values["bounds.u4_upper"]
    for key, upper in (("bounds.u2_upper", u2_upper), ("bounds.u4_upper", u4_upper)):
        if upper < lower:
            raise ConfigError(key, f"must not be below bounds.lower = {lower}")

    config = ScenarioConfig(
        params=params,
        initial=initial,
        grid=grid,
        weights=weights,
        bounds=ControlBounds.for_params(params, lower, u2_upper, u4_upper),
        scenario=scenario,
        alpha_values=_number_list("alpha_sweep.alpha_values", values["alpha_sweep.alpha_values"], 0.0, 1.0),
        cost_levels=_number_list("control_grid.cost_levels", values["control_grid.cost_levels"],
                                 positive=True),
        grid_alpha_values=_number_list("control_grid.alpha_values",
                                       values["control_grid.alpha_values"], 0.0, 1.0),
        subset_masks=_masks("subsets.masks", values["subsets.masks"]),
        include_uncontrolled=include_uncontrolled,
        solver=solver,
        output_dir=Path(output_dir),
        lower_bound=lower,
        u2_upper=u2_upper,
        u4_upper=u4_upper,
    )
    logger.debug(f"Parsed {scenario.value} configuration: {params}")
    return config


def load_config(path: Union[str, Path], default_scenario: Optional[Union[Scenario, str]] = None,
                overrides: Optional[Mapping[str, Any]] = None) -> ScenarioConfig:
    """Read and parse a configuration file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        logger.error(f"Cannot read configuration {path}: {str(e)}")
        raise ConfigError("document", f"cannot read {path}: {str(e)}") from e
    return parse_config(text, default_scenario, overrides)
