"""Transmit-power design under a stability constraint.

Success probability of a link is ``Phi(SINR) = exp(-a / SINR)``. For a single
node the stability constraint ``prod_i Phi(SINR_i) >= tau(gamma+L)/(1-eta) - delta``
is equivalent to ``sum_i 1/SINR_i <= C`` with the constant ``C`` of
:func:`c_tau`; splitting ``C`` by weights ``q`` on the simplex turns it into a
family of linear programs in the powers.

``gains[j, i]`` is the gain from link ``j``'s transmitter to link ``i``'s
receiver throughout.
"""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DivergenceError, DomainError, InfeasibleError
from .lpsolve import LpProblem, LpStatus, solve
from .model import ChannelModel, NodeChannel
from .protocols import rr_constants
from .stability import s_infinity

__all__ = [
    "sinr",
    "sinr_vector",
    "phi_outage",
    "node_success_probability",
    "multi_node_stability_lhs",
    "deterministic_power_lhs",
    "ConstraintCheck",
    "single_node_constraint",
    "StabilityConstant",
    "c_tau",
    "gamma_plus_L_from_c",
    "SimplexPoint",
    "simplex_grid",
    "build_lp",
    "PowerSolution",
    "solve_problem2",
    "constraint_margin",
    "two_link_gains",
    "two_link_interval",
    "two_link_powers",
    "corollary_coefficients",
    "two_link_epsilon_star",
    "TwoLinkReport",
    "two_link_feasibility",
    "RegionResult",
    "stability_region",
]


def _node(channel) -> NodeChannel:
    if isinstance(channel, NodeChannel):
        return channel
    if isinstance(channel, ChannelModel):
        if len(channel.nodes) != 1:
            raise ConfigError(f"expected a single-node channel, got {len(channel.nodes)} nodes")
        return channel.nodes[0]
    raise ConfigError(f"expected NodeChannel or ChannelModel, got {type(channel).__name__}")


def _powers(p, n: int) -> np.ndarray:
    arr = np.asarray(p, dtype=float).reshape(-1)
    if arr.size != n:
        raise ConfigError(f"expected {n} powers, got {arr.size}")
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ConfigError("powers must be nonnegative")
    return arr


# ------------------------------------------------------------ SINR and outage


def sinr_vector(p, channel) -> np.ndarray:
    """SINR of every link: ``g_ii p_i / (sigma_i^2 + sum_{j != i} g_ji p_j)``."""
    ch = _node(channel)
    p = _powers(p, ch.n_links)
    g = ch.gains
    received = g.T @ p  # received[i] = sum_j g_ji p_j
    own = np.diag(g) * p
    return own / (ch.noise + received - own)


def sinr(i: int, p, channel) -> float:
    """SINR of link ``i`` (0-based)."""
    ch = _node(channel)
    if not 0 <= i < ch.n_links:
        raise IndexError(f"link index {i} out of range for {ch.n_links} links")
    return float(sinr_vector(p, ch)[i])


def phi_outage(s, a: float = 1.0):
    """``exp(-a / s)``, with ``Phi(0) = 0`` and ``Phi(inf) = 1``."""
    if not a > 0:
        raise ConfigError(f"outage parameter a must be positive, got {a}")
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ConfigError("SINR must be nonnegative")
    with np.errstate(divide="ignore"):
        out = np.where(s > 0, np.exp(-a / np.where(s > 0, s, 1.0)), 0.0)
    return float(out) if out.ndim == 0 else out


def node_success_probability(p, channel, a: float | None = None,
                             phi: Callable = phi_outage) -> float:
    """Product of link success probabilities of one node."""
    ch = _node(channel)
    if a is None:
        a = channel.a if isinstance(channel, ChannelModel) else 1.0
    return float(np.prod(phi(sinr_vector(p, ch), a)))


# ------------------------------------------------------- stability constraints


def deterministic_power_lhs(f: Sequence[float], tau_bar: float, gamma: float, L: float) -> float:
    """Round-robin LHS ``gamma tau s / (1 - L tau)`` for node probabilities ``f``.

    The series ``s`` uses ratio ``1 / (1 - L tau)`` and the expected
    contractions ``f_n (eta - 1) + 1`` of the round-robin schedule.

    Raises
    ------
    DomainError
        If ``1 - L tau <= 0``.
    DivergenceError
        If the series diverges, i.e. the powers do not stabilise.
    """
    if not tau_bar > 0:
        raise ConfigError(f"tau_bar must be positive, got {tau_bar}")
    if not 1.0 - L * tau_bar > 0:
        raise DomainError(f"need 1 - L tau > 0, got L tau = {L * tau_bar}")
    consts = rr_constants(f)
    omega = 1.0 / tau_bar
    s = s_infinity(omega, L, consts.kappa_period, consts.kappa_bar, enforce_floor=False)
    if gamma == 0.0:
        return 0.0
    return gamma * tau_bar * s / (1.0 - L * tau_bar)


def multi_node_stability_lhs(p_all, tau_bar: float, gamma: float, L: float,
                             channel: ChannelModel, phi: Callable = phi_outage) -> float:
    """Multi-node stability LHS with ``f_n`` derived from the powers.

    ``p_all`` stacks the powers node by node. Certified iff below one.
    """
    sizes = [nc.n_links for nc in channel.nodes]
    p = _powers(p_all, sum(sizes))
    parts = np.split(p, np.cumsum(sizes)[:-1])
    f = [float(np.prod(phi(sinr_vector(pn, nc), channel.a)))
         for pn, nc in zip(parts, channel.nodes)]
    if min(f) <= 0.0:
        raise DivergenceError("a node has zero success probability at these powers")
    return deterministic_power_lhs(f, tau_bar, gamma, L)


@dataclass(frozen=True)
class ConstraintCheck:
    lhs: float
    rhs: float
    satisfied: bool
    attainable: bool

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs


def single_node_constraint(p, tau_bar: float, gamma: float, L: float, eta: float,
                           channel, delta: float = 0.0, a: float | None = None) -> ConstraintCheck:
    """Single-node check ``prod Phi(SINR_i) > tau (gamma + L) / (1 - eta) - delta``.

    With ``delta = 0`` the inequality is strict; with ``delta > 0`` it is the
    relaxed non-strict form used by the power-design LP. ``attainable`` is
    False when the right-hand side is at least one, which no powers can meet.
    """
    ch = _node(channel)
    if a is None:
        a = channel.a if isinstance(channel, ChannelModel) else 1.0
    lhs = node_success_probability(p, ch, a)
    rhs = tau_bar * (gamma + L) / (1.0 - eta) - delta
    attainable = rhs < 1.0
    ok = (lhs > rhs) if delta == 0.0 else (lhs >= rhs)
    return ConstraintCheck(lhs, rhs, bool(ok and attainable), attainable)


@dataclass(frozen=True)
class StabilityConstant:
    """``C = -ln(tau (gamma + L) / (1 - eta) - delta) / a`` and its inputs.

    ``bracket`` is ``exp(-a C)``, the right-hand side of the relaxed constraint.
    """

    c_tau: float
    delta: float
    a: float
    tau_bar: float | None = None
    gamma_plus_L: float | None = None
    eta: float | None = None

    def __post_init__(self):
        if not (self.c_tau > 0 and math.isfinite(self.c_tau)):
            raise InfeasibleError(f"stability constant must be positive, got {self.c_tau}",
                                  binding="tau_bar")
        if not self.a > 0:
            raise ConfigError(f"outage parameter a must be positive, got {self.a}")

    @property
    def bracket(self) -> float:
        return math.exp(-self.a * self.c_tau)

    @classmethod
    def from_value(cls, c_value: float, a: float = 1.0, delta: float = 1e-6, **provenance):
        return cls(float(c_value), delta, a, **provenance)


def c_tau(tau_bar: float, gamma: float, L: float, eta: float, delta: float = 1e-6,
          a: float = 1.0) -> StabilityConstant:
    """Stability constant of the power-design LP.

    Raises
    ------
    InfeasibleError
        If the bracket is not in (0, 1): ``binding='delta'`` when it is
        nonpositive, ``binding='tau_bar'`` when it reaches one.
    """
    if not (tau_bar > 0 and 0 <= eta < 1 and delta >= 0 and a > 0):
        raise ConfigError("need tau_bar > 0, eta in [0, 1), delta >= 0, a > 0")
    bracket = tau_bar * (gamma + L) / (1.0 - eta) - delta
    if bracket <= 0.0:
        raise InfeasibleError(f"bracket {bracket} <= 0: delta = {delta} is too large",
                              binding="delta")
    if bracket >= 1.0:
        raise InfeasibleError(
            f"bracket {bracket} >= 1: tau_bar = {tau_bar} is too large for any power",
            binding="tau_bar",
        )
    return StabilityConstant(-math.log(bracket) / a, delta, a, tau_bar, gamma + L, eta)


def gamma_plus_L_from_c(c_value: float, tau_bar: float, eta: float, delta: float = 1e-6,
                        a: float = 1.0) -> float:
    """Invert :func:`c_tau` for ``gamma + L``."""
    return (1.0 - eta) * (math.exp(-a * c_value) + delta) / tau_bar


# ------------------------------------------------------------------------ LP


@dataclass(frozen=True)
class SimplexPoint:
    """Weights ``q_i`` in (0, 1) summing to one."""

    q: tuple[float, ...]

    def __post_init__(self):
        q = tuple(float(v) for v in self.q)
        if not q:
            raise ConfigError("need at least one weight")
        if len(q) == 1:
            if q[0] != 1.0:
                raise ConfigError("a single weight must equal 1")
        elif any(not (0.0 < v < 1.0) for v in q):
            raise ConfigError(f"simplex weights must lie in (0, 1), got {q}")
        if abs(sum(q) - 1.0) > 1e-12:
            raise ConfigError(f"simplex weights must sum to 1, got {sum(q)}")
        object.__setattr__(self, "q", q)


def simplex_grid(ell: int, resolution: int) -> list[SimplexPoint]:
    """Interior lattice points ``k / r`` with every ``k_i >= 1``, in lexicographic order."""
    if ell < 1 or resolution < ell:
        raise ConfigError(f"need resolution >= ell >= 1, got ell={ell}, r={resolution}")
    if ell == 1:
        return [SimplexPoint((1.0,))]
    pts = []
    for cuts in itertools.combinations(range(1, resolution), ell - 1):
        ks = np.diff((0,) + cuts + (resolution,))
        q = ks / resolution
        q[-1] = 1.0 - float(np.sum(q[:-1]))
        pts.append(SimplexPoint(tuple(q)))
    pts.sort(key=lambda s: s.q)
    return pts


def build_lp(q: SimplexPoint, channel, c: StabilityConstant, p_max: float | None = None):
    """Constraint data ``(A(q), b)`` of ``A p >= b``.

    Rows ``i``: ``g_ii q_i C p_i - sum_{j != i} g_ji p_j >= sigma_i^2``; then
    ``-p_i >= -P_max`` (omitted when the cap is infinite).
    """
    ch = _node(channel)
    if p_max is None:
        p_max = channel.p_max if isinstance(channel, ChannelModel) else math.inf
    ell = ch.n_links
    qv = np.asarray(q.q if isinstance(q, SimplexPoint) else q, dtype=float)
    if qv.size != ell:
        raise ConfigError(f"need {ell} weights, got {qv.size}")
    A = -ch.gains.T.copy()
    A[np.diag_indices(ell)] = np.diag(ch.gains) * qv * c.c_tau
    b = ch.noise.copy()
    if math.isfinite(p_max):
        A = np.vstack([A, -np.eye(ell)])
        b = np.concatenate([b, -np.full(ell, p_max)])
    return A, b


@dataclass(frozen=True)
class PowerSolution:
    powers: np.ndarray
    objective: float
    q_star: SimplexPoint | None
    feasible: bool
    lhs: float
    rhs: float
    points_feasible: int = 0
    points_total: int = 0

    @property
    def margin(self) -> float:
        """``prod Phi(SINR) - exp(-a C)`` at the solution."""
        return self.lhs - self.rhs

    def to_dict(self) -> dict:
        return {
            "powers": self.powers.tolist(),
            "objective": self.objective,
            "q_star": list(self.q_star.q) if self.q_star else None,
            "feasible": self.feasible,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "points_feasible": self.points_feasible,
            "points_total": self.points_total,
        }


def constraint_margin(p, channel, c: StabilityConstant, a: float | None = None) -> tuple[float, float]:
    """``(prod Phi(SINR_i), exp(-a C))`` by direct substitution."""
    if a is None:
        a = channel.a if isinstance(channel, ChannelModel) else c.a
    return node_success_probability(p, _node(channel), a), c.bracket


def _solve_point(args):
    q, ch, c, p_max = args
    A, b = build_lp(q, ch, c, p_max)
    return solve(LpProblem(np.ones(ch.n_links), A, b))


def solve_problem2(channel, c: StabilityConstant, grid_resolution: int | None = None,
                   workers: int | None = None, p_max: float | None = None) -> PowerSolution:
    """Minimum total power over an interior simplex grid of weights.

    Every grid LP is solved; the smallest objective wins, ties going to the
    lexicographically smallest ``q``. The returned powers are re-checked
    against the nonlinear constraint by substitution.

    Raises
    ------
    InfeasibleError
        If no grid point is feasible; ``binding`` is ``'P_max'`` when dropping
        the cap would help and ``'tau_bar'`` otherwise.
    """
    ch = _node(channel)
    if p_max is None:
        p_max = channel.p_max if isinstance(channel, ChannelModel) else math.inf
    a = channel.a if isinstance(channel, ChannelModel) else c.a
    if abs(a - c.a) > 1e-12 * a:
        raise ConfigError(f"channel outage parameter {a} differs from the constant's {c.a}")
    if grid_resolution is None:
        grid_resolution = 50 if ch.n_links <= 3 else 12
    grid = simplex_grid(ch.n_links, grid_resolution)
    jobs = [(q, ch, c, p_max) for q in grid]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            outcomes = list(ex.map(_solve_point, jobs))
    else:
        outcomes = [_solve_point(j) for j in jobs]

    best = None
    n_ok = 0
    for q, out in zip(grid, outcomes):
        if out.status is not LpStatus.OPTIMAL:
            continue
        n_ok += 1
        key = (out.objective, q.q)
        if best is None or key < best[0]:
            best = (key, q, out)
    if best is None:
        binding = "tau_bar"
        if math.isfinite(p_max):
            relaxed = [_solve_point((q, ch, c, math.inf)) for q in grid]
            if any(o.status is LpStatus.OPTIMAL for o in relaxed):
                binding = "P_max"
        raise InfeasibleError(
            f"no weight vector on the {grid_resolution}-grid gives a feasible LP "
            f"(binding bound: {binding})",
            binding=binding,
        )
    _, q, out = best
    lhs, rhs = constraint_margin(out.x, ch, c, a)
    return PowerSolution(out.x, out.objective, q, bool(lhs >= rhs * (1 - 1e-9)), lhs, rhs,
                         n_ok, len(grid))


# ------------------------------------------------------------- two-link forms


def two_link_gains(channel) -> tuple[float, float, float, float]:
    """``(g11, g12, g21, g22)`` with ``g12`` from transmitter 1 to receiver 2."""
    ch = _node(channel)
    if ch.n_links != 2:
        raise ConfigError(f"two-link formulas need 2 links, got {ch.n_links}")
    g = ch.gains
    return float(g[0, 0]), float(g[0, 1]), float(g[1, 0]), float(g[1, 1])


def two_link_interval(c: StabilityConstant | float, channel) -> tuple[float, float]:
    """Open interval of ``eps`` for which the two constraint lines meet in the positive orthant.

    Raises
    ------
    InfeasibleError
        If the discriminant is not positive (``tau_bar`` too large).
    """
    C = c.c_tau if isinstance(c, StabilityConstant) else float(c)
    g11, g12, g21, g22 = two_link_gains(channel)
    disc = 0.25 - g12 * g21 / (g11 * g22 * C * C)
    if disc <= 0.0:
        raise InfeasibleError(
            f"empty interval: C^2 = {C * C} must exceed 4 g12 g21 / (g11 g22) = "
            f"{4 * g12 * g21 / (g11 * g22)}",
            binding="tau_bar",
        )
    r = math.sqrt(disc)
    return 0.5 - r, 0.5 + r


def _den(eps, C, g11, g12, g21, g22):
    return -eps * eps * g11 * g22 * C * C + eps * g11 * g22 * C * C - g12 * g21


def two_link_powers(eps: float, channel, c: StabilityConstant | float) -> tuple[float, float]:
    """Vertex of the two-link LP for weights ``(eps, 1 - eps)``.

    Raises
    ------
    DomainError
        If ``eps`` is outside :func:`two_link_interval` (the denominator is
        not positive and the lines do not meet in the positive orthant).
    """
    C = c.c_tau if isinstance(c, StabilityConstant) else float(c)
    g11, g12, g21, g22 = two_link_gains(channel)
    s1, s2 = (float(v) for v in _node(channel).noise)
    den = _den(eps, C, g11, g12, g21, g22)
    if not den > 0.0:
        raise DomainError(f"eps = {eps} gives denominator {den} <= 0; outside the interval")
    p1 = (-eps * g22 * C * s1 + g21 * s2 + g22 * C * s1) / den
    p2 = (eps * g11 * C * s2 + g12 * s1) / den
    return p1, p2


def corollary_coefficients(channel, c: StabilityConstant | float) -> tuple[float, float, float]:
    """Quadratic ``(a, b, c)`` whose root in the interval minimises ``p1 + p2``."""
    C = c.c_tau if isinstance(c, StabilityConstant) else float(c)
    g11, g12, g21, g22 = two_link_gains(channel)
    s1, s2 = (float(v) for v in _node(channel).noise)
    qa = g11**2 * g22 * C**3 * s2 - g11 * g22**2 * C**3 * s1
    qb = (2 * g11 * g22**2 * C**3 * s1 + 2 * g11 * g12 * g22 * C**2 * s1
          + 2 * g11 * g21 * g22 * C**2 * s2)
    qc = (g12 * g21 * g22 * C * s1 - g11 * g22**2 * C**3 * s1 - g11 * g12 * g22 * C**2 * s1
          - g11 * g21 * g22 * C**2 * s2 - g11 * g12 * g21 * C * s2)
    return qa, qb, qc


def _total(eps, channel, c):
    return sum(two_link_powers(eps, channel, c))


def _dense_scan(channel, c, lo, hi, points=100_001):
    eps = np.linspace(lo, hi, points + 2)[1:-1]
    C = c.c_tau if isinstance(c, StabilityConstant) else float(c)
    g11, g12, g21, g22 = two_link_gains(channel)
    s1, s2 = (float(v) for v in _node(channel).noise)
    den = _den(eps, C, g11, g12, g21, g22)
    tot = ((-eps * g22 * C * s1 + g21 * s2 + g22 * C * s1) + (eps * g11 * C * s2 + g12 * s1)) / den
    return float(eps[int(np.argmin(tot))])


def two_link_epsilon_star(channel, c: StabilityConstant | float) -> float:
    """Weight ``eps*`` minimising ``p1 + p2`` over the feasible interval.

    Roots of the quadratic are filtered by interval membership; if both
    qualify the one with the smaller total power wins. Without a qualifying
    root a dense scan is used and a warning is issued.
    """
    lo, hi = two_link_interval(c, channel)
    qa, qb, qc = corollary_coefficients(channel, c)
    scale = max(abs(qa), abs(qb), abs(qc))
    roots = []
    if abs(qa) <= 1e-14 * scale:
        if qb != 0:
            roots = [-qc / qb]
    else:
        disc = qb * qb - 4 * qa * qc
        if disc >= 0:
            sq = math.sqrt(disc)
            # numerically stable pair
            t = -0.5 * (qb + math.copysign(sq, qb))
            roots = [t / qa] + ([qc / t] if t != 0 else [])
    inside = [r for r in roots if lo < r < hi]
    if not inside:
        warnings.warn(
            "no root of the optimality quadratic lies in the feasible interval; "
            "falling back to a dense scan",
            RuntimeWarning,
            stacklevel=2,
        )
        return _dense_scan(channel, c, lo, hi)
    return min(inside, key=lambda r: _total(r, channel, c))


@dataclass(frozen=True)
class TwoLinkReport:
    tau_bar: float
    tau_bound: float
    tau_ok: bool
    c: StabilityConstant | None
    interval: tuple[float, float] | None
    eps_star: float | None
    powers: tuple[float, float] | None
    p_max: float
    p_max_ok: bool | None

    @property
    def tau_margin(self) -> float:
        return self.tau_bound - self.tau_bar

    @property
    def feasible(self) -> bool:
        return bool(self.tau_ok and self.p_max_ok)

    def to_dict(self) -> dict:
        return {
            "tau_bar": self.tau_bar,
            "tau_bound": self.tau_bound,
            "tau_ok": self.tau_ok,
            "tau_margin": self.tau_margin,
            "c_tau": self.c.c_tau if self.c else None,
            "interval": list(self.interval) if self.interval else None,
            "eps_star": self.eps_star,
            "powers": list(self.powers) if self.powers else None,
            "p_max": self.p_max,
            "p_max_ok": self.p_max_ok,
            "p_max_margin": (self.p_max - max(self.powers)) if self.powers else None,
            "feasible": self.feasible,
        }


def two_link_feasibility(channel, tau_bar: float, gamma: float, L: float, eta: float,
                         delta: float = 1e-6, a: float = 1.0, P_max: float | None = None,
                         c_override: float | None = None) -> TwoLinkReport:
    """Evaluate the ``tau_bar`` and ``P_max`` conditions of the two-link design.

    ``c_override`` replaces the computed constant (for reproducing a rounded
    published value). A report is always returned.
    """
    if P_max is None:
        P_max = channel.p_max if isinstance(channel, ChannelModel) else math.inf
    g11, g12, g21, g22 = two_link_gains(channel)
    tau_bound = (1.0 - eta) / (gamma + L) * (delta + math.exp(-a * math.sqrt(4 * g12 * g21 / (g11 * g22))))
    tau_ok = tau_bar < tau_bound
    c = interval = eps = powers = None
    p_ok = None
    try:
        if c_override is not None:
            c = StabilityConstant.from_value(c_override, a=a, delta=delta, tau_bar=tau_bar,
                                             gamma_plus_L=gamma + L, eta=eta)
        else:
            c = c_tau(tau_bar, gamma, L, eta, delta, a)
        interval = two_link_interval(c, channel)
        eps = two_link_epsilon_star(channel, c)
        powers = two_link_powers(eps, channel, c)
        p_ok = bool(P_max >= max(powers))
    except InfeasibleError:
        p_ok = False
    return TwoLinkReport(tau_bar, tau_bound, bool(tau_ok), c, interval, eps, powers, P_max, p_ok)


# -------------------------------------------------------------------- region


@dataclass(frozen=True)
class RegionResult:
    """Grid evaluation of the relaxed constraint for two links.

    ``feasible[i, j]`` refers to ``(p1[i], p2[j])``. ``lower`` and ``upper``
    hold, per ``p1`` column, the interpolated ``p2`` where the constraint
    switches on and off (NaN when no switch is seen on the grid).
    """

    p1: np.ndarray
    p2: np.ndarray
    feasible: np.ndarray
    value: np.ndarray = field(repr=False)
    lower: np.ndarray = field(repr=False)
    upper: np.ndarray = field(repr=False)

    def rows(self):
        for i, x in enumerate(self.p1):
            for j, y in enumerate(self.p2):
                yield float(x), float(y), int(self.feasible[i, j])


def stability_region(channel, c: StabilityConstant, p1_range=(0.0, 70.0), p2_range=(0.0, 70.0),
                     resolution: int = 141) -> RegionResult:
    """Evaluate ``ln prod Phi(SINR) - ln exp(-a C) >= 0`` on a ``resolution``-square grid."""
    ch = _node(channel)
    if ch.n_links != 2:
        raise ConfigError("stability_region is defined for two links")
    a = channel.a if isinstance(channel, ChannelModel) else c.a
    p1 = np.linspace(*p1_range, resolution)
    p2 = np.linspace(*p2_range, resolution)
    P1, P2 = np.meshgrid(p1, p2, indexing="ij")
    g = ch.gains
    s1, s2 = ch.noise
    with np.errstate(divide="ignore", invalid="ignore"):
        sinr1 = g[0, 0] * P1 / (s1 + g[1, 0] * P2)
        sinr2 = g[1, 1] * P2 / (s2 + g[0, 1] * P1)
        # ln prod Phi = -a (1/sinr1 + 1/sinr2); -inf where a power is zero
        inv = np.where(sinr1 > 0, 1.0 / np.where(sinr1 > 0, sinr1, 1.0), np.inf) + \
            np.where(sinr2 > 0, 1.0 / np.where(sinr2 > 0, sinr2, 1.0), np.inf)
    value = -a * inv + a * c.c_tau
    feasible = value >= 0.0
    lower = np.full(resolution, np.nan)
    upper = np.full(resolution, np.nan)
    for i in range(resolution):
        v = value[i]
        for j in range(resolution - 1):
            if v[j] < 0 <= v[j + 1] and np.isnan(lower[i]):
                lower[i] = _interp(p2[j], p2[j + 1], v[j], v[j + 1])
            elif v[j] >= 0 > v[j + 1] and np.isnan(upper[i]):
                upper[i] = _interp(p2[j], p2[j + 1], v[j], v[j + 1])
    return RegionResult(p1, p2, feasible, value, lower, upper)


def _interp(x0, x1, v0, v1):
    if not np.isfinite(v0):
        return float(x1)
    return float(x0 + (x1 - x0) * v0 / (v0 - v1))
