import json
import math

import pytest

from tapegrip.config import (
    GripperGeometry,
    MechanicsParams,
    SimConfig,
    config_from_dict,
    config_to_dict,
    default_config,
    load_config,
    save_config,
)
from tapegrip.errors import ConfigError


def test_default_config_validates():
    cfg = default_config()
    assert cfg.geometry.r0 == 15.0
    assert cfg.contact_threshold == 0.25


def test_roundtrip_save_load(tmp_path):
    cfg = default_config()
    path = tmp_path / "cfg.json"
    save_config(cfg, path)
    loaded = load_config(path)
    assert loaded == cfg


def test_shipped_default_matches_in_memory():
    import tapegrip
    from pathlib import Path
    shipped = Path(tapegrip.__file__).parent / "data" / "default_config.json"
    assert load_config(shipped) == default_config()


def test_degree_suffix_angles(tmp_path):
    data = config_to_dict(default_config())
    data["geometry"]["theta4_max"] = "110 deg"
    data["geometry"]["theta4_min"] = "-15 deg"
    cfg = config_from_dict(data)
    assert cfg.geometry.theta4_max == pytest.approx(math.radians(110.0), abs=1e-15)
    assert cfg.geometry.theta4_min == pytest.approx(math.radians(-15.0), abs=1e-15)


def test_rad_suffix_and_bad_suffix():
    data = config_to_dict(default_config())
    data["geometry"]["theta4_max"] = "1.9 rad"
    assert config_from_dict(data).geometry.theta4_max == 1.9
    data["geometry"]["theta4_max"] = "1.9 furlongs"
    with pytest.raises(ConfigError, match="suffix"):
        config_from_dict(data)


def test_L_min_above_L_max_rejected():
    data = config_to_dict(default_config())
    data["geometry"]["L_min"] = 2000.0
    with pytest.raises(ConfigError, match="L_min < L_max"):
        config_from_dict(data)


def test_unknown_key_rejected():
    data = config_to_dict(default_config())
    data["geometry"]["wingspan"] = 3.0
    with pytest.raises(ConfigError, match="wingspan"):
        config_from_dict(data)
    data = config_to_dict(default_config())
    data["frobnicate"] = {}
    with pytest.raises(ConfigError, match="frobnicate"):
        config_from_dict(data)


def test_parse_error_reports_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "geometry": {,}\n}\n')
    with pytest.raises(ConfigError, match="line 2"):
        load_config(path)


def test_omitted_hysteresis_gives_loading_only_spring(tmp_path):
    # Dropping the optional unloading coefficients must round-trip to the
    # same in-memory default (loading-curve-only spring), field for field.
    data = config_to_dict(default_config())
    assert data["mechanics"]["spring_unloading"] is None
    del data["mechanics"]["spring_unloading"]
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    cfg = load_config(path)
    assert cfg.mechanics.spring_unloading is None
    assert cfg == default_config()


def test_geometry_invariants():
    with pytest.raises(ConfigError, match="a_min < a_max"):
        SimConfig(geometry=GripperGeometry(a_min=90.0, a_max=80.0)).validate()
    with pytest.raises(ConfigError, match="triangle can close"):
        SimConfig(geometry=GripperGeometry(L_min=50.0)).validate()
    with pytest.raises(ConfigError):
        SimConfig(tick_dt=0.0).validate()
    with pytest.raises(ConfigError):
        SimConfig(contact_threshold=-1.0).validate()


def test_spring_validation_through_config():
    with pytest.raises(ConfigError, match="increasing"):
        SimConfig(mechanics=MechanicsParams(spring_loading=(-0.1,))).validate()
