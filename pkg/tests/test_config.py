import pytest
import yaml

from mfnash.config import DEFAULTS, ConfigError, config_from_dict, load_config
from mfnash.model import reference_spec

GAME = {"horizon": 1.0, "x0": 1.0, "coefficients": {"a": 0.1, "b1": 1.0, "b2": 1.0},
        "terminal": {"h1": 1.0}}


def test_defaults_fill_missing_sections():
    cfg = config_from_dict({"game": GAME})
    assert cfg.seed == 0 and cfg.section("nash") == DEFAULTS["nash"]


def test_shipped_config_is_the_benchmark(tmp_path):
    from pathlib import Path

    cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "s1.yaml")
    spec, ref = cfg.spec, reference_spec()
    for name in ("a", "abar", "b1", "c1", "g1", "gbar2", "m2"):
        assert float(getattr(spec, name)(0.5)) == float(getattr(ref, name)(0.5))
    assert (spec.h1, spec.h2, spec.x0) == (ref.h1, ref.h2, ref.x0)


def test_tables_become_tabulated_coefficients():
    game = {**GAME, "coefficients": {"a": [0.0, 1.0]}}
    assert float(config_from_dict({"game": game}).spec.a(0.5)) == 0.5


@pytest.mark.parametrize("raw", [
    None,
    {"seed": 1},
    {"game": GAME, "extra": 1},
    {"game": {**GAME, "coefficients": {"zz": 1.0}}},
    {"game": {**GAME, "coefficients": {"a": "fast"}}},
    {"game": {**GAME, "coefficients": {"a": []}}},
    {"game": {**GAME, "terminal": {"h9": 1.0}}},
    {"game": {**GAME, "colour": 1}},
    {"game": GAME, "seed": -1},
    {"game": GAME, "seed": True},
    {"game": GAME, "nash": {"n_paths": 0}},
    {"game": GAME, "nash": {"n_paths": 1.5}},
    {"game": GAME, "fbsde": {"antithetic": "yes"}},
    {"game": GAME, "simulate": {"bogus": 1}},
    {"game": GAME, "solve": [1, 2]},
])
def test_malformed_configs_are_rejected(raw):
    with pytest.raises(ConfigError):
        config_from_dict(raw)


def test_unreadable_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("game: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_override_and_digest():
    cfg = config_from_dict({"game": GAME, "seed": 4})
    other = cfg.override("simulate", n_paths=50, n_steps=None)
    assert other.section("simulate")["n_paths"] == 50
    assert other.section("simulate")["n_steps"] == DEFAULTS["simulate"]["n_steps"]
    assert cfg.section("simulate")["n_paths"] == DEFAULTS["simulate"]["n_paths"]
    assert cfg.digest() == config_from_dict(yaml.safe_load(yaml.safe_dump({"game": GAME, "seed": 4}))).digest()
    assert cfg.digest() != other.digest() and len(cfg.digest()) == 12
    assert cfg.override("seed", seed=9).seed == 9
