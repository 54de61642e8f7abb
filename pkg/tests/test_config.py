import math

import pytest
from hypothesis import given, strategies as st

from ehsrb.config import (
    RunConfig,
    SystemSpec,
    config_from_dict,
    default_config,
    load_config,
    save_config,
)
from ehsrb.errors import ConfigurationError


def test_default_valid():
    default_config().system.validate()


def test_roundtrip(tmp_path):
    cfg = default_config()
    path = tmp_path / "cfg.json"
    save_config(cfg, path)
    again = load_config(path)
    assert again == cfg


def test_radius_order_rejected():
    with pytest.raises(ConfigurationError):
        SystemSpec(r0=0.15, r1=0.05).validate()


def test_alpha_open_interval():
    with pytest.raises(ConfigurationError):
        SystemSpec(alpha=1.0).validate()
    with pytest.raises(ConfigurationError):
        SystemSpec(alpha=0.0).validate()


def test_injectivity_invariant():
    with pytest.raises(ConfigurationError):
        SystemSpec(contraction=0.45, offset=0.2,
                   beta=-math.log(0.45)).validate()


def test_gluing_coherence():
    with pytest.raises(ConfigurationError, match="base_expansion"):
        SystemSpec(gamma=0.5).validate()


def test_unknown_section_rejected():
    with pytest.raises(ConfigurationError):
        config_from_dict({"bogus": {}})


def test_unknown_key_rejected():
    with pytest.raises(ConfigurationError):
        config_from_dict({"system": {"nope": 1}})


def test_malformed_file(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_config(p)


@given(
    alpha=st.floats(0.05, 0.95),
    r0=st.floats(0.01, 0.04),
)
def test_spec_accepts_valid_band(alpha, r0):
    SystemSpec(alpha=alpha, r0=r0).validate()
