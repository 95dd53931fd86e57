"""Scheduling-protocol analytics.

Stochastic protocol: each transmission grants a node drawn uniformly from
``N`` nodes; the node's packets all arrive with probability ``f_n``. Round
robin grants node ``(k - 1) mod N`` (0-based) at schedule index ``k >= 1``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DomainError, NotAsUgesError
from .model import NetworkTopology, Protocol
from .numerics import sample_bernoulli, sample_uniform_node

__all__ = [
    "CoverOrderWarning",
    "CoverStats",
    "expected_cover_time",
    "cover_time_pgf",
    "pgf_domain_bound",
    "cover_stats",
    "exact_expected_cover_time",
    "sample_cover_times",
    "AsUgesConstants",
    "rr_eta",
    "rr_constants",
    "lift_uges_to_as_uges",
    "schedule_node",
    "sample_jump",
    "sample_jump_matrix",
]


class CoverOrderWarning(UserWarning):
    """The closed-form cover time depends on node labelling for unequal ``f_n``."""


def _probabilities(f) -> np.ndarray:
    arr = np.asarray(f, dtype=float).reshape(-1)
    if arr.size == 0:
        raise ConfigError("need at least one node probability")
    if np.any(np.isnan(arr)) or np.any(arr < 0) or np.any(arr > 1):
        raise ConfigError(f"node probabilities must lie in (0, 1], got {arr}")
    if np.any(arr == 0):
        raise DomainError("a node with zero success probability is never covered")
    return arr


def _maybe_warn(f: np.ndarray, warn: bool):
    if warn and np.ptp(f) > 0:
        warnings.warn(
            "closed-form cover-time statistics for unequal node probabilities "
            "depend on the node order; compare with exact_expected_cover_time "
            "or a Monte Carlo estimate",
            CoverOrderWarning,
            stacklevel=3,
        )


def expected_cover_time(f: Sequence[float], warn: bool = True) -> float:
    """``sum_n N / ((N - n + 1) f_n)`` in the supplied node order (n = 1..N)."""
    f = _probabilities(f)
    _maybe_warn(f, warn)
    N = f.size
    n = np.arange(1, N + 1)
    return float(np.sum(N / ((N - n + 1) * f)))


def pgf_domain_bound(f: Sequence[float]) -> float:
    """Radius ``1 / (1 - min_n f_n (N - n + 1) / N)``; infinite if the min is 1."""
    f = _probabilities(f)
    N = f.size
    n = np.arange(1, N + 1)
    m = float(np.min(f * (N - n + 1))) / N
    return math.inf if m >= 1.0 else 1.0 / (1.0 - m)


def cover_time_pgf(f: Sequence[float], s: float, warn: bool = True) -> float:
    """Closed-form probability generating function ``G_T(s)``.

    Raises
    ------
    DomainError
        If ``|s|`` is not below :func:`pgf_domain_bound`.
    """
    f = _probabilities(f)
    _maybe_warn(f, warn)
    bound = pgf_domain_bound(f)
    if not abs(s) < bound:
        raise DomainError(f"|s| = {abs(s)} is outside the pgf domain |s| < {bound}")
    N = f.size
    n = np.arange(1, N + 1)
    num = s * (N - n + 1) * f
    den = N * (1.0 - (1.0 - f) * s) - s * (n - 1) * f
    return float(np.prod(num / den))


@dataclass(frozen=True)
class CoverStats:
    expected_cover: float
    pgf: Callable[[float], float]
    domain_bound: float


def cover_stats(f: Sequence[float], warn: bool = True) -> CoverStats:
    f = _probabilities(f)
    _maybe_warn(f, warn)
    fs = tuple(f)
    return CoverStats(
        expected_cover_time(fs, warn=False),
        lambda s: cover_time_pgf(fs, s, warn=False),
        pgf_domain_bound(fs),
    )


def exact_expected_cover_time(f: Sequence[float]) -> float:
    """Mean cover time of the stochastic protocol by inclusion-exclusion.

    Node ``n`` is granted and succeeds on a transmission with probability
    ``f_n / N`` independently across transmissions, so the cover time is the
    maximum of dependent geometric variables. Cost is ``2^N``.
    """
    f = _probabilities(f)
    N = f.size
    if N > 20:
        raise ConfigError("inclusion-exclusion is limited to 20 nodes")
    pi = f / N
    total = 0.0
    for r in range(1, N + 1):
        sign = 1.0 if r % 2 else -1.0
        for S in itertools.combinations(range(N), r):
            total += sign / float(np.sum(pi[list(S)]))
    return total


def sample_cover_times(rng: np.random.Generator, f: Sequence[float], trials: int,
                       chunk: int = 64) -> np.ndarray:
    """Monte Carlo cover times of the stochastic protocol (vectorised).

    Each transmission picks a node uniformly and succeeds with that node's
    probability; ``T`` counts transmissions until every node has succeeded.
    """
    f = _probabilities(f)
    N = f.size
    out = np.zeros(trials, dtype=np.int64)
    covered = np.zeros((trials, N), dtype=bool)
    active = np.arange(trials)
    count = 0
    while active.size:
        nodes = sample_uniform_node(rng, N, size=(active.size, chunk))
        ok = rng.random((active.size, chunk)) < f[nodes]
        cov = covered[active]
        done_at = np.full(active.size, -1, dtype=np.int64)
        for j in range(chunk):
            rows = np.nonzero(ok[:, j])[0]
            cov[rows, nodes[rows, j]] = True
            newly = (done_at < 0) & cov.all(axis=1)
            done_at[newly] = count + j + 1
        covered[active] = cov
        fin = done_at > 0
        out[active[fin]] = done_at[fin]
        active = active[~fin]
        count += chunk
    return out


# ---------------------------------------------------------------- round robin


@dataclass(frozen=True)
class AsUgesConstants:
    """Constants of an almost-surely UGES protocol.

    ``kappa_period[j]`` is the expected contraction at the schedule slot of
    node ``j`` (0-based); slot ``k >= 1`` belongs to node ``(k - 1) mod P``.
    """

    a1: float
    a2: float
    eta: float
    kappa_bar: float
    kappa_period: tuple[float, ...]

    def __post_init__(self):
        if not (0 < self.a1 <= self.a2):
            raise ConfigError(f"need 0 < a1 <= a2, got a1={self.a1}, a2={self.a2}")
        if not (0 <= self.eta < 1):
            raise ConfigError(f"eta must lie in [0, 1), got {self.eta}")
        if not self.kappa_bar < 1:
            raise NotAsUgesError(f"kappa_bar = {self.kappa_bar} is not below one")
        object.__setattr__(self, "kappa_period", tuple(float(k) for k in self.kappa_period))
        if max(self.kappa_period) > self.kappa_bar + 1e-15:
            raise ConfigError("every expected contraction must be bounded by kappa_bar")

    def expected_kappa(self, k: int) -> float:
        """Expected contraction at schedule index ``k`` (1-based)."""
        if k < 1:
            raise IndexError("schedule indices start at 1")
        return self.kappa_period[(k - 1) % len(self.kappa_period)]


def rr_eta(N: int) -> float:
    """Round-robin contraction ``sqrt((N - 1) / N)`` of the lossless protocol."""
    if N < 1:
        raise ConfigError(f"need N >= 1, got {N}")
    return math.sqrt((N - 1) / N)


def _node_probs(topology_or_f) -> np.ndarray:
    if isinstance(topology_or_f, NetworkTopology):
        return topology_or_f.node_success()
    return _probabilities(topology_or_f)


def rr_constants(topology_or_f) -> AsUgesConstants:
    """Round-robin constants from a topology or a vector of node probabilities."""
    f = _node_probs(topology_or_f)
    N = f.size
    eta = rr_eta(N)
    kappa = f * (eta - 1.0) + 1.0
    return AsUgesConstants(
        a1=1.0,
        a2=math.sqrt(N),
        eta=eta,
        kappa_bar=float(1.0 - np.min(f) * (1.0 - eta)),
        kappa_period=tuple(kappa),
    )


def lift_uges_to_as_uges(eta: float, P_eta: Sequence[float]) -> float:
    """Smallest uniform ``kappa_bar`` with ``P(k) eta + 1 - P(k) <= kappa_bar``.

    Raises
    ------
    NotAsUgesError
        If the bound is not below one.
    """
    if not 0 <= eta < 1:
        raise ConfigError(f"eta must lie in [0, 1), got {eta}")
    P = np.asarray(P_eta, dtype=float).reshape(-1)
    if P.size == 0 or np.any(P < 0) or np.any(P > 1):
        raise ConfigError("P_eta values must lie in [0, 1]")
    kappa_bar = float(np.max(P * eta + 1.0 - P))
    if kappa_bar >= 1.0:
        raise NotAsUgesError(
            f"kappa_bar = {kappa_bar} >= 1: some slot never contracts in expectation"
        )
    return kappa_bar


# -------------------------------------------------------------------- jumps


def schedule_node(protocol: Protocol, N: int, k: int, rng=None) -> int:
    """Node (0-based) granted at schedule index ``k`` (1-based)."""
    protocol = Protocol.parse(protocol)
    if protocol is Protocol.ROUND_ROBIN:
        if k < 1:
            raise IndexError("schedule indices start at 1")
        return (k - 1) % N
    return int(sample_uniform_node(rng, N))


def sample_jump(rng, protocol, topology: NetworkTopology, k: int):
    """Sample one transmission.

    Returns ``(node, link_ok, keep)``: the granted node, a 0/1 vector of
    per-link outcomes for that node, and the diagonal of the jump matrix
    (0 on coordinates of successful links, 1 elsewhere).
    """
    node = schedule_node(protocol, topology.N, k, rng)
    links = topology.nodes[node]
    ok = sample_bernoulli(rng, [link.probability for link in links])
    keep = np.ones(topology.n_e)
    for link, s in zip(links, ok):
        if s:
            keep[list(link.coords)] = 0.0
    return node, ok, keep


def sample_jump_matrix(rng, protocol, topology: NetworkTopology, k: int) -> np.ndarray:
    """Diagonal 0/1 matrix ``Q(k)`` acting on the e-coordinates."""
    return np.diag(sample_jump(rng, protocol, topology, k)[2])
