import json
import math

import numpy as np
import pytest

from wncs.config import builtin_names, load_builtin, load_config, parse_config, resolved
from wncs.errors import ConfigError
from wncs.model import Protocol


def test_builtins_load():
    assert {"batch_reactor", "rate_two_nodes", "power_two_links", "power_four_links"} <= set(builtin_names())
    sc = load_builtin("rate_two_nodes")
    assert sc.protocol is Protocol.ROUND_ROBIN and sc.transmission.rate == 400.0
    np.testing.assert_allclose(sc.topology.node_success(), [0.24, 0.6])
    assert "provenance" in load_builtin("batch_reactor").raw


def test_power_configs():
    two = load_builtin("power_two_links")
    assert two.wiring == "sensor_only" and two.wncs.n_e == 2
    assert two.channel.p_max == 70.0 and two.transmission.tau_bar == pytest.approx(0.005)
    four = load_builtin("power_four_links")
    g = four.channel.nodes[0].gains
    assert g.shape == (4, 4) and np.allclose(g, g.T)


def test_extends_relative_file(tmp_path):
    base = {"network": {"probabilities": [[0.5], [0.5]]}, "transmission": {"tau_bar": 0.01}}
    (tmp_path / "base.json").write_text(json.dumps(base))
    (tmp_path / "child.json").write_text(json.dumps({"extends": "base.json", "protocol": "stochastic"}))
    sc = load_config(tmp_path / "child.json")
    assert sc.protocol is Protocol.STOCHASTIC_UNIFORM and sc.transmission.rate == pytest.approx(100.0)
    assert sc.plant is None and sc.channel is None


def test_manifest_round_trip(tmp_path):
    sc = load_builtin("rate_two_nodes")
    (tmp_path / "m.json").write_text(json.dumps({"manifest_version": 1, "config": resolved(sc)}))
    again = load_config(tmp_path / "m.json")
    assert resolved(again) == resolved(sc)


def test_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config("no_such_scenario")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    raw = resolved(load_builtin("rate_two_nodes"))
    raw["wiring"] = "sensor_only"
    with pytest.raises(ConfigError, match="error coordinates"):
        parse_config(raw)
    raw = resolved(load_builtin("rate_two_nodes"))
    raw["wiring"] = "sideways"
    with pytest.raises(ConfigError):
        parse_config(raw)
    with pytest.raises(ConfigError):
        parse_config({"network": {}})
    with pytest.raises(ConfigError):
        load_builtin("power_two_links").__class__(
            {}, "x", None, None, "full", None, Protocol.ROUND_ROBIN, None, None).require_channel()
