"""JSON scenario files.

Top-level objects: ``plant``, ``controller``, ``network``, ``channel``,
``transmission``, ``protocol``; optional ``wiring`` (``full`` or
``sensor_only``), ``stability``, ``power``, ``simulation``, ``reference``.
Matrices are row-major arrays of arrays. ``extends`` names another file
(relative to this one, or a bundled scenario) whose keys are inherited.
A run manifest written by the CLI can be loaded as a scenario too.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .model import (
    ChannelModel,
    Link,
    LtiController,
    LtiPlant,
    LtiWncs,
    NetworkTopology,
    NodeChannel,
    Protocol,
    TransmissionModel,
    build_closed_loop,
    build_sensor_only_loop,
)

__all__ = ["Scenario", "load_config", "load_builtin", "builtin_names", "parse_config"]

_DATA = "data"


def builtin_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("wncs").joinpath(_DATA).iterdir()
                  if p.name.endswith(".json"))


def _read_json(text: str, where: str) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{where}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: top level must be an object")
    return data


def _load_raw(path: Path | None, name: str | None, depth: int = 0) -> dict:
    if depth > 8:
        raise ConfigError("'extends' chain is too deep")
    if name is not None:
        res = resources.files("wncs").joinpath(_DATA, name if name.endswith(".json") else name + ".json")
        if not res.is_file():
            raise ConfigError(f"no bundled scenario {name!r}; available: {builtin_names()}")
        data, base_dir = _read_json(res.read_text(), name), None
    else:
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        data, base_dir = _read_json(text, str(path)), path.parent
    if "manifest_version" in data and "config" in data:
        data = data["config"]
    parent = data.pop("extends", None)
    if parent is None:
        return data
    if base_dir is not None and (base_dir / parent).is_file():
        base = _load_raw(base_dir / parent, None, depth + 1)
    else:
        base = _load_raw(None, parent, depth + 1)
    base.update(data)
    return base


def _get(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return d[key]


def _network(spec: dict) -> NetworkTopology:
    if "nodes" in spec:
        nodes = []
        for n, node in enumerate(spec["nodes"]):
            links = node["links"] if isinstance(node, dict) else node
            nodes.append(tuple(Link(_get(l, "probability", f"network.nodes[{n}]"),
                                    tuple(_get(l, "coords", f"network.nodes[{n}]")))
                               for l in links))
        return NetworkTopology(tuple(nodes))
    if "probabilities" in spec:
        return NetworkTopology.from_probabilities(spec["probabilities"],
                                                  int(spec.get("coords_per_link", 1)))
    raise ConfigError("network: need 'nodes' or 'probabilities'")


def _channel(spec: dict) -> ChannelModel:
    nodes = tuple(NodeChannel(_get(n, "gains", "channel.nodes"), _get(n, "noise", "channel.nodes"))
                  for n in _get(spec, "nodes", "channel"))
    p_max = spec.get("p_max", math.inf)
    return ChannelModel(nodes, float(spec.get("a", 1.0)),
                        math.inf if p_max is None else float(p_max))


def _transmission(spec) -> TransmissionModel:
    if isinstance(spec, (int, float)):
        return TransmissionModel(float(spec))
    if "rate" in spec:
        return TransmissionModel(float(spec["rate"]))
    if "tau_bar" in spec:
        return TransmissionModel.from_tau_bar(float(spec["tau_bar"]))
    raise ConfigError("transmission: need 'rate' or 'tau_bar'")


@dataclass(frozen=True)
class Scenario:
    """A resolved configuration with its domain objects built."""

    raw: dict = field(repr=False)
    name: str
    plant: LtiPlant | None
    controller: LtiController | None
    wiring: str
    topology: NetworkTopology | None
    protocol: Protocol
    transmission: TransmissionModel | None
    channel: ChannelModel | None

    @property
    def wncs(self) -> LtiWncs:
        if self.plant is None or self.controller is None:
            raise ConfigError(f"{self.name}: plant and controller are required here")
        if self.wiring == "sensor_only":
            return build_sensor_only_loop(self.plant, self.controller)
        return build_closed_loop(self.plant, self.controller)

    def section(self, key: str) -> dict:
        val = self.raw.get(key, {})
        if not isinstance(val, dict):
            raise ConfigError(f"{self.name}: '{key}' must be an object")
        return val

    def require_topology(self) -> NetworkTopology:
        if self.topology is None:
            raise ConfigError(f"{self.name}: a 'network' section is required")
        return self.topology

    def require_channel(self) -> ChannelModel:
        if self.channel is None:
            raise ConfigError(f"{self.name}: a 'channel' section is required")
        return self.channel

    def require_transmission(self) -> TransmissionModel:
        if self.transmission is None:
            raise ConfigError(f"{self.name}: a 'transmission' section is required")
        return self.transmission


def parse_config(raw: dict, name: str = "config") -> Scenario:
    """Build a :class:`Scenario` from an already-resolved dictionary."""
    raw = copy.deepcopy(raw)
    try:
        plant = LtiPlant(**raw["plant"]) if "plant" in raw else None
        controller = LtiController(**raw["controller"]) if "controller" in raw else None
    except TypeError as exc:
        raise ConfigError(f"{name}: bad plant/controller keys ({exc})") from None
    wiring = str(raw.get("wiring", "full")).lower().replace("-", "_")
    if wiring not in ("full", "sensor_only"):
        raise ConfigError(f"{name}: wiring must be 'full' or 'sensor_only', got {wiring!r}")
    try:
        topology = _network(raw["network"]) if "network" in raw else None
        channel = _channel(raw["channel"]) if "channel" in raw else None
        transmission = _transmission(raw["transmission"]) if "transmission" in raw else None
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"{name}: malformed section ({exc})") from None
    protocol = Protocol.parse(raw.get("protocol", "round_robin"))
    sc = Scenario(raw, str(raw.get("name", name)), plant, controller, wiring, topology,
                  protocol, transmission, channel)
    if plant is not None and controller is not None and topology is not None:
        if topology.n_e != sc.wncs.n_e:
            raise ConfigError(
                f"{name}: network carries {topology.n_e} error coordinates but the "
                f"{wiring} loop has {sc.wncs.n_e}"
            )
    return sc


def load_config(path_or_name: str | Path) -> Scenario:
    """Load a scenario from a file path or the name of a bundled scenario."""
    p = Path(path_or_name)
    if p.is_file():
        raw = _load_raw(p, None)
        return parse_config(raw, p.stem)
    raw = _load_raw(None, str(path_or_name))
    return parse_config(raw, str(path_or_name))


def load_builtin(name: str) -> Scenario:
    return parse_config(_load_raw(None, name), name)


def resolved(scenario: Scenario) -> dict[str, Any]:
    """The fully merged configuration, suitable for a manifest."""
    return copy.deepcopy(scenario.raw)
