from pathlib import Path

import pytest

from tb_stigma.data.config import Config, ConfigError, Scenario, load_config, parse_config


def test_empty_document_uses_defaults():
    """Every key is optional."""
    config = parse_config("", default_scenario="single")
    assert config.scenario == Scenario.SINGLE
    assert config.params.alpha == 0.7
    assert config.params.Lambda == 588.0
    assert config.initial.N == pytest.approx(25000.0)
    assert config.grid.steps == 3000
    assert config.weights.as_array().tolist() == [10.0] * 4
    assert config.bounds.upper[0] == pytest.approx(0.3 / 0.7)
    assert config.alpha_values == (1.0, 0.8, 0.6, 0.4, 0.2, 0.0)
    assert config.cost_levels == (10.0, 100.0, 1000.0)
    assert config.subset_masks[0] == (True, True, False, False)
    assert config.include_uncontrolled is True
    assert str(config.output_dir) == "output"


def test_dotted_keys_and_tables():
    """Dotted keys and tables are equivalent."""
    dotted = parse_config('scenario.type = "alpha_sweep"\nparams.alpha = 0.5\ngrid.steps = 100\n')
    tables = parse_config('[scenario]\ntype = "alpha_sweep"\n[params]\nalpha = 0.5\n[grid]\nsteps = 100\n')
    assert dotted == tables
    assert dotted.scenario == Scenario.ALPHA_SWEEP
    assert dotted.params.alpha == 0.5
    assert dotted.grid.steps == 100


def test_grid_step_size():
    """grid.h sets the number of steps unless grid.steps is given."""
    config = parse_config("grid.tf = 10\ngrid.h = 0.05\n", default_scenario="single")
    assert config.grid.steps == 200


def test_overrides_win():
    """Command-line overrides replace document values; None is ignored."""
    config = parse_config("grid.steps = 100\n", "single", {"grid.steps": 50, "output.dir": None})
    assert config.grid.steps == 50
    assert str(config.output_dir) == "output"


def test_document_scenario_beats_default():
    """scenario.type in the document takes precedence."""
    config = parse_config('scenario.type = "control_grid"\n', default_scenario="single")
    assert config.scenario == Scenario.CONTROL_GRID


@pytest.mark.parametrize("text, key", [
    ("", "scenario.type"),
    ('scenario.type = "bogus"\n', "scenario.type"),
    ('scenario.type = "single"\nparams.gamma = 1\n', "params.gamma"),
    ('scenario.type = "single"\nparams.alpha = 1.5\n', "params.alpha"),
    ('scenario.type = "single"\nparams.mu = 0\n', "params.mu"),
    ('scenario.type = "single"\nparams.beta_c = "two"\n', "params.beta_c"),
    ('scenario.type = "single"\nweights.C2 = 0\n', "weights.C2"),
    ('scenario.type = "single"\ngrid.tf = -1\n', "grid.tf"),
    ('scenario.type = "single"\ngrid.steps = 0\n', "grid.steps"),
    ('scenario.type = "single"\nsolver.relaxation = 0\n', "solver.relaxation"),
    ('scenario.type = "single"\nsolver.gradient_tolerance = 0\n', "solver.gradient_tolerance"),
    ('scenario.type = "single"\nbounds.u2_upper = 0.001\n', "bounds.u2_upper"),
    ('scenario.type = "single"\nsubsets.masks = [[1, 1, 0]]\n', "subsets.masks"),
    ('scenario.type = "single"\nalpha_sweep.alpha_values = [1.2]\n', "alpha_sweep.alpha_values"),
    ('scenario.type = "single"\ncontrol_grid.cost_levels = [0]\n', "control_grid.cost_levels"),
    ("scenario.type = [\n", "scenario.type"),
    ("scenario.type = 3\n", "scenario.type"),
    ('scenario.type = "single"\nparams.alpha = 0.5\nparams.alpha = 0.6\n', "document"),
])
def test_invalid_documents(text, key):
    """Each error names the offending key."""
    with pytest.raises(ConfigError) as excinfo:
        parse_config(text)
    assert excinfo.value.key == key
    assert str(excinfo.value).startswith(key)


def test_config_error_is_value_error():
    """Callers may catch the builtin."""
    with pytest.raises(ValueError):
        parse_config("")


def test_load_config(tmp_path):
    """Files are read as UTF-8 TOML; missing files are configuration errors."""
    path = tmp_path / "run.toml"
    path.write_text('scenario.type = "subset_comparison"\nsubsets.include_uncontrolled = false\n',
                    encoding="utf-8")
    config = load_config(path)
    assert config.scenario == Scenario.SUBSET_COMPARISON
    assert config.include_uncontrolled is False
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_bounds_for_mask():
    """Masked bounds follow the configured caps."""
    config = parse_config("bounds.u4_upper = 0.5\n", "single")
    bounds = config.bounds_for(config.params, (False, False, True, True))
    assert bounds.upper == (0.0, 0.0, 1.0, 0.5)


def test_initialize_creates_output_dir(tmp_path):
    """Output directory is created on demand."""
    target = Config.initialize(tmp_path / "a" / "b")
    assert target.is_dir()


@pytest.mark.parametrize("name", ["single", "alpha_sweep", "control_grid", "subset_comparison", "equilibria"])
def test_example_configs_parse(name):
    """Shipped example documents are valid."""
    path = Path(__file__).resolve().parent.parent / "configs" / f"{name}.toml"
    config = load_config(path, default_scenario="single")
    assert config.grid.steps >= 1
