"""Domain types: plant/controller/closed loop, network topology, channel.

Node and link indices are 0-based throughout the code. The schedule index
``k`` of a transmission is 1-based (the first arrival is ``k = 1``).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError

__all__ = [
    "LtiPlant",
    "LtiController",
    "LtiWncs",
    "Link",
    "NetworkTopology",
    "NodeChannel",
    "ChannelModel",
    "Protocol",
    "TransmissionModel",
    "build_closed_loop",
    "build_sensor_only_loop",
    "cumulative_success",
]


def _matrix(value, name, shape=None) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 1 and shape is not None and len(shape) == 2:
        arr = arr.reshape(shape)
    if arr.ndim != 2:
        raise ConfigError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} has non-finite entries")
    if shape is not None and arr.shape != tuple(shape):
        raise ConfigError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LtiPlant:
    """``xp' = Ap xp + Bp u + Ep w``, ``y = Cp xp``.

    ``Ep`` defaults to an empty ``n_p x 0`` matrix (no disturbance channel).
    """

    Ap: np.ndarray
    Bp: np.ndarray
    Cp: np.ndarray
    Ep: np.ndarray | None = None

    def __post_init__(self):
        Ap = _matrix(self.Ap, "Ap")
        n_p = Ap.shape[0]
        if Ap.shape[1] != n_p:
            raise ConfigError(f"Ap must be square, got {Ap.shape}")
        Bp = _matrix(self.Bp, "Bp")
        Cp = _matrix(self.Cp, "Cp")
        if Bp.shape[0] != n_p:
            raise ConfigError(f"Bp has {Bp.shape[0]} rows, Ap is {n_p}x{n_p}")
        if Cp.shape[1] != n_p:
            raise ConfigError(f"Cp has {Cp.shape[1]} columns, Ap is {n_p}x{n_p}")
        Ep = np.zeros((n_p, 0)) if self.Ep is None else _matrix(self.Ep, "Ep")
        if Ep.shape[0] != n_p:
            raise ConfigError(f"Ep has {Ep.shape[0]} rows, Ap is {n_p}x{n_p}")
        Ep.setflags(write=False)
        object.__setattr__(self, "Ap", Ap)
        object.__setattr__(self, "Bp", Bp)
        object.__setattr__(self, "Cp", Cp)
        object.__setattr__(self, "Ep", Ep)

    @property
    def n_p(self) -> int:
        return self.Ap.shape[0]

    @property
    def n_u(self) -> int:
        return self.Bp.shape[1]

    @property
    def n_y(self) -> int:
        return self.Cp.shape[0]

    @property
    def n_w(self) -> int:
        return self.Ep.shape[1]


@dataclass(frozen=True)
class LtiController:
    """``xc' = Ac xc + Bc y``, ``u = Cc xc``."""

    Ac: np.ndarray
    Bc: np.ndarray
    Cc: np.ndarray

    def __post_init__(self):
        Ac = _matrix(self.Ac, "Ac")
        if Ac.shape[0] != Ac.shape[1]:
            raise ConfigError(f"Ac must be square, got {Ac.shape}")
        Bc = _matrix(self.Bc, "Bc")
        Cc = _matrix(self.Cc, "Cc")
        if Bc.shape[0] != Ac.shape[0]:
            raise ConfigError(f"Bc has {Bc.shape[0]} rows, Ac is {Ac.shape}")
        if Cc.shape[1] != Ac.shape[0]:
            raise ConfigError(f"Cc has {Cc.shape[1]} columns, Ac is {Ac.shape}")
        object.__setattr__(self, "Ac", Ac)
        object.__setattr__(self, "Bc", Bc)
        object.__setattr__(self, "Cc", Cc)

    @property
    def n_c(self) -> int:
        return self.Ac.shape[0]


@dataclass(frozen=True)
class LtiWncs:
    """Closed loop written as the interconnection of an x- and an e-subsystem.

    ``x' = A11 x + A12 e + E1 w`` and ``e' = A21 x + A22 e + E2 w`` between
    transmissions; ``x`` is continuous across transmissions.
    """

    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    E1: np.ndarray
    E2: np.ndarray

    def __post_init__(self):
        A11 = _matrix(self.A11, "A11")
        n_x = A11.shape[0]
        if A11.shape[1] != n_x:
            raise ConfigError(f"A11 must be square, got {A11.shape}")
        A12 = _matrix(self.A12, "A12")
        n_e = A12.shape[1]
        E1 = _matrix(self.E1, "E1")
        n_w = E1.shape[1]
        blocks = {
            "A12": (A12, (n_x, n_e)),
            "A21": (_matrix(self.A21, "A21"), (n_e, n_x)),
            "A22": (_matrix(self.A22, "A22"), (n_e, n_e)),
            "E1": (E1, (n_x, n_w)),
            "E2": (_matrix(self.E2, "E2"), (n_e, n_w)),
        }
        for name, (arr, shape) in blocks.items():
            if arr.shape != shape:
                raise ConfigError(f"{name} has shape {arr.shape}, expected {shape}")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "A11", A11)

    @property
    def n_x(self) -> int:
        return self.A11.shape[0]

    @property
    def n_e(self) -> int:
        return self.A12.shape[1]

    @property
    def n_w(self) -> int:
        return self.E1.shape[1]

    def flow_matrix(self) -> np.ndarray:
        """Block matrix ``[[A11, A12], [A21, A22]]`` acting on ``z = (x, e)``."""
        return np.block([[self.A11, self.A12], [self.A21, self.A22]])

    def disturbance_matrix(self) -> np.ndarray:
        return np.vstack([self.E1, self.E2])


def _check_loop_dims(plant: LtiPlant, controller: LtiController):
    if controller.Bc.shape[1] != plant.n_y:
        raise ConfigError(
            f"controller expects {controller.Bc.shape[1]} measurements, "
            f"plant produces {plant.n_y}"
        )
    if controller.Cc.shape[0] != plant.n_u:
        raise ConfigError(
            f"controller produces {controller.Cc.shape[0]} inputs, "
            f"plant takes {plant.n_u}"
        )


def build_closed_loop(plant: LtiPlant, controller: LtiController) -> LtiWncs:
    """Closed loop with both ``y`` and ``u`` sent over the network (ZOH).

    ``e = (y_hat - y, u_hat - u)`` so ``n_e = n_y + n_u``.
    """
    _check_loop_dims(plant, controller)
    Ap, Bp, Cp, Ep = plant.Ap, plant.Bp, plant.Cp, plant.Ep
    Ac, Bc, Cc = controller.Ac, controller.Bc, controller.Cc
    n_p, n_c, n_y, n_u = plant.n_p, controller.n_c, plant.n_y, plant.n_u

    A11 = np.block([[Ap, Bp @ Cc], [Bc @ Cp, Ac]])
    A12 = np.block([[np.zeros((n_p, n_y)), Bp], [Bc, np.zeros((n_c, n_u))]])
    E1 = np.vstack([Ep, np.zeros((n_c, plant.n_w))])
    out = np.block([[Cp, np.zeros((n_y, n_c))], [np.zeros((n_u, n_p)), Cc]])
    return LtiWncs(A11, A12, -out @ A11, -out @ A12, E1, -out @ E1)


def build_sensor_only_loop(plant: LtiPlant, controller: LtiController) -> LtiWncs:
    """Closed loop where only ``y`` is networked; ``u`` reaches the plant directly."""
    _check_loop_dims(plant, controller)
    Ap, Bp, Cp, Ep = plant.Ap, plant.Bp, plant.Cp, plant.Ep
    Ac, Bc, Cc = controller.Ac, controller.Bc, controller.Cc
    n_p, n_c, n_y = plant.n_p, controller.n_c, plant.n_y

    A11 = np.block([[Ap, Bp @ Cc], [Bc @ Cp, Ac]])
    A12 = np.vstack([np.zeros((n_p, n_y)), Bc])
    E1 = np.vstack([Ep, np.zeros((n_c, plant.n_w))])
    out = np.hstack([Cp, np.zeros((n_y, n_c))])
    return LtiWncs(A11, A12, -out @ A11, -out @ A12, E1, -out @ E1)


@dataclass(frozen=True)
class Link:
    """One transmitter/receiver pair: success probability and carried e-coordinates."""

    probability: float
    coords: tuple[int, ...]

    def __post_init__(self):
        p = float(self.probability)
        if not (0.0 < p <= 1.0) or math.isnan(p):
            raise ConfigError(f"link success probability must lie in (0, 1], got {p}")
        object.__setattr__(self, "probability", p)
        object.__setattr__(self, "coords", tuple(int(c) for c in self.coords))


@dataclass(frozen=True)
class NetworkTopology:
    """Nodes (clusters) of links; each link resets its own e-coordinates."""

    nodes: tuple[tuple[Link, ...], ...]
    n_e: int = field(init=False)

    def __post_init__(self):
        nodes = tuple(tuple(node) for node in self.nodes)
        if not nodes or any(len(node) == 0 for node in nodes):
            raise ConfigError("network needs at least one node, each with at least one link")
        coords = [c for node in nodes for link in node for c in link.coords]
        n_e = len(coords)
        if sorted(coords) != list(range(n_e)):
            raise ConfigError(
                f"link coordinates must partition 0..{n_e - 1}, got {sorted(coords)}"
            )
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "n_e", n_e)

    @classmethod
    def from_probabilities(
        cls, probabilities: Sequence[Sequence[float]], coords_per_link: int = 1
    ) -> "NetworkTopology":
        """Stack links node by node, each link carrying ``coords_per_link`` coordinates."""
        nodes, nxt = [], 0
        for node in probabilities:
            links = []
            for p in node:
                links.append(Link(p, tuple(range(nxt, nxt + coords_per_link))))
                nxt += coords_per_link
            nodes.append(tuple(links))
        return cls(tuple(nodes))

    @property
    def N(self) -> int:
        return len(self.nodes)

    @property
    def link_counts(self) -> tuple[int, ...]:
        return tuple(len(node) for node in self.nodes)

    def link_probabilities(self) -> list[list[float]]:
        return [[link.probability for link in node] for node in self.nodes]

    def node_success(self) -> np.ndarray:
        """Cumulative success probability of every node."""
        return np.array([cumulative_success(self, n) for n in range(self.N)])

    def node_coords(self, n: int) -> tuple[int, ...]:
        return tuple(c for link in self.nodes[n] for c in link.coords)

    def with_node_success(self, f: Sequence[float]) -> "NetworkTopology":
        """Same wiring, one link per node, node ``n`` succeeding with ``f[n]``."""
        if len(f) != self.N:
            raise ConfigError(f"need {self.N} node probabilities, got {len(f)}")
        return NetworkTopology(
            tuple((Link(fn, self.node_coords(n)),) for n, fn in enumerate(f))
        )


def cumulative_success(topology: NetworkTopology, n: int) -> float:
    """Probability that every link of node ``n`` (0-based) delivers its packet."""
    if not 0 <= n < topology.N:
        raise IndexError(f"node index {n} out of range for {topology.N} nodes")
    return math.prod(link.probability for link in topology.nodes[n])


@dataclass(frozen=True)
class NodeChannel:
    """Interference data of one node.

    ``gains[j, i]`` is the gain from link j's transmitter to link i's receiver,
    so the diagonal holds the direct gains.
    """

    gains: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        g = _matrix(self.gains, "gains")
        if g.shape[0] != g.shape[1]:
            raise ConfigError(f"gain matrix must be square, got {g.shape}")
        if np.any(g <= 0):
            raise ConfigError("channel gains must be strictly positive")
        s = np.array(self.noise, dtype=float).reshape(-1)
        if s.shape != (g.shape[0],):
            raise ConfigError(f"need {g.shape[0]} noise variances, got {s.shape[0]}")
        if np.any(~np.isfinite(s)) or np.any(s <= 0):
            raise ConfigError("noise variances must be finite and strictly positive")
        s.setflags(write=False)
        object.__setattr__(self, "gains", g)
        object.__setattr__(self, "noise", s)

    @property
    def n_links(self) -> int:
        return self.gains.shape[0]


@dataclass(frozen=True)
class ChannelModel:
    nodes: tuple[NodeChannel, ...]
    a: float = 1.0
    p_max: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if not self.nodes:
            raise ConfigError("channel model needs at least one node")
        if not self.a > 0:
            raise ConfigError(f"outage parameter a must be positive, got {self.a}")
        if not self.p_max > 0:
            raise ConfigError(f"P_max must be positive, got {self.p_max}")


class Protocol(str, enum.Enum):
    ROUND_ROBIN = "round_robin"
    STOCHASTIC_UNIFORM = "stochastic_uniform"

    @classmethod
    def parse(cls, value) -> "Protocol":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {"rr": cls.ROUND_ROBIN, "roundrobin": cls.ROUND_ROBIN,
                   "stochastic": cls.STOCHASTIC_UNIFORM, "uniform": cls.STOCHASTIC_UNIFORM}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown protocol {value!r}") from None


@dataclass(frozen=True)
class TransmissionModel:
    """Poisson transmission instants with arrival rate ``rate``."""

    rate: float

    def __post_init__(self):
        rate = float(self.rate)
        if not (0 < rate < math.inf):
            raise ConfigError(f"arrival rate must be finite and positive, got {self.rate}")
        object.__setattr__(self, "rate", rate)

    @classmethod
    def from_tau_bar(cls, tau_bar: float) -> "TransmissionModel":
        if not tau_bar > 0:
            raise ConfigError(f"mean intertransmission time must be positive, got {tau_bar}")
        return cls(1.0 / tau_bar)

    @property
    def tau_bar(self) -> float:
        return 1.0 / self.rate
