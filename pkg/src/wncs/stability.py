"""Small-gain stability conditions and minimal stabilising arrival rates.

Two families of conditions:

* stochastic protocol, with the cover time ``E{T}`` and the factor
  ``rho_omega``; LHS ``E{T} gamma (1 + rho) / ((omega - |A|)(1 - rho))``;
* deterministic (a.s. UGES) protocols, with the series ``s_inf(omega)``;
  LHS ``gamma s_inf / (omega - L)``.

Both LHS are strictly decreasing in ``omega``, so the minimal rate is found
by bisection. For LTI loops the constants come from :func:`x_subsystem_gain`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, DivergenceError, DomainError, InfeasibleError, NotHurwitzError
from .model import LtiWncs, NetworkTopology
from .numerics import GainQuery, abs_matrix, eigenvalues, l2_gain, spectral_norm
from .protocols import AsUgesConstants, expected_cover_time, rr_constants

__all__ = [
    "StochasticGainInputs",
    "DeterministicGainInputs",
    "LhsCurve",
    "RateBoundResult",
    "stochastic_floor",
    "deterministic_floor",
    "rho_omega",
    "smallgain_lhs_stochastic",
    "smallgain_lhs_deterministic",
    "s_infinity",
    "s_infinity_truncated",
    "min_rate_stochastic",
    "min_rate_deterministic",
    "tabbara_bound",
    "x_subsystem_gain",
    "stochastic_inputs_lti",
    "deterministic_inputs_lti",
    "OMEGA_MAX",
]

OMEGA_MAX = 1e12
_MAX_ITER = 200
_RTOL = 1e-6


def _node_probs(f) -> tuple[float, ...]:
    arr = np.asarray(f, dtype=float).reshape(-1)
    if arr.size == 0 or np.any(~(arr > 0)) or np.any(arr > 1):
        raise ConfigError(f"node probabilities must lie in (0, 1], got {f}")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class StochasticGainInputs:
    """``gamma``: gain from ``(e, w)`` to ``G(x)``; ``normA``: growth bound of ``e``."""

    gamma: float
    normA: float
    f: tuple[float, ...]

    def __post_init__(self):
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ConfigError(f"gamma must be finite and nonnegative, got {self.gamma}")
        if not (self.normA >= 0 and math.isfinite(self.normA)):
            raise ConfigError(f"|A| must be finite and nonnegative, got {self.normA}")
        object.__setattr__(self, "f", _node_probs(self.f))

    @property
    def N(self) -> int:
        return len(self.f)

    def with_min_probability(self) -> "StochasticGainInputs":
        return replace(self, f=(min(self.f),) * self.N)


@dataclass(frozen=True)
class DeterministicGainInputs:
    """``gamma`` and growth constant ``L`` with the protocol's a.s. UGES constants."""

    gamma: float
    L: float
    constants: AsUgesConstants

    def __post_init__(self):
        if not (self.gamma >= 0 and math.isfinite(self.gamma)):
            raise ConfigError(f"gamma must be finite and nonnegative, got {self.gamma}")
        if not (self.L >= 0 and math.isfinite(self.L)):
            raise ConfigError(f"L must be finite and nonnegative, got {self.L}")

    def with_min_probability(self) -> "DeterministicGainInputs":
        c = self.constants
        flat = replace(c, kappa_period=(c.kappa_bar,) * len(c.kappa_period))
        return replace(self, constants=flat)


@dataclass(frozen=True)
class LhsCurve:
    """Sampled LHS. For deterministic mode ``rho`` holds the per-period ratio
    of the ``s_inf`` series (it must stay below one)."""

    omega: np.ndarray
    lhs: np.ndarray
    rho: np.ndarray

    def rows(self):
        return zip(self.omega.tolist(), self.lhs.tolist(), self.rho.tolist())


@dataclass(frozen=True)
class RateBoundResult:
    mode: str
    omega_star: float
    validity_floor: float
    tabbara_omega: float
    lhs_curve: LhsCurve = field(repr=False)
    inputs: object = field(repr=False, default=None)

    @property
    def ratio(self) -> float:
        """How much larger the minimum-probability bound is."""
        return self.tabbara_omega / self.omega_star

    def lhs(self, omega: float) -> float:
        return _lhs_or_inf(self.mode, omega, self.inputs)

    def is_consistent(self) -> bool:
        """``lhs(omega*) < 1 <= lhs(0.99 omega*)``."""
        return self.lhs(self.omega_star) < 1.0 <= self.lhs(0.99 * self.omega_star)


# ---------------------------------------------------------------- stochastic


def stochastic_floor(normA: float, f: Sequence[float]) -> float:
    """``N |A| / min_n f_n (N - n + 1)``."""
    f = np.asarray(_node_probs(f))
    N = f.size
    n = np.arange(1, N + 1)
    return float(N * normA / np.min(f * (N - n + 1)))


def rho_omega(omega: float, normA: float, f: Sequence[float]) -> float:
    """Product factor of the stochastic condition, minus one.

    Raises
    ------
    DomainError
        If ``omega`` does not exceed :func:`stochastic_floor`.
    """
    f = np.asarray(_node_probs(f))
    floor = stochastic_floor(normA, f)
    if not (omega > floor and omega > 0):
        raise DomainError(f"omega = {omega} must exceed the floor {floor}")
    N = f.size
    n = np.arange(1, N + 1)
    num = (N - n + 1) * f
    den = N * (1.0 - normA / omega - (1.0 - f)) - (n - 1) * f
    return float(np.prod(num / den) - 1.0)


def smallgain_lhs_stochastic(omega: float, inputs: StochasticGainInputs) -> float:
    """LHS of the stochastic small-gain condition; certified iff below one.

    Raises
    ------
    DomainError
        Below the floor, or where ``rho_omega >= 1``.
    """
    rho = rho_omega(omega, inputs.normA, inputs.f)
    if inputs.gamma == 0.0:
        return 0.0
    if rho >= 1.0:
        raise DomainError(f"rho_omega = {rho} >= 1 at omega = {omega}")
    ET = expected_cover_time(inputs.f, warn=False)
    return ET * inputs.gamma * (1.0 + rho) / ((omega - inputs.normA) * (1.0 - rho))


# ------------------------------------------------------------- deterministic


def deterministic_floor(L: float, kappa_bar: float) -> float:
    """``L / (1 - kappa_bar)``."""
    if not kappa_bar < 1:
        raise DomainError(f"kappa_bar = {kappa_bar} must be below one")
    return L / (1.0 - kappa_bar)


def _period_terms(omega: float, L: float, kappa: Sequence[float]):
    r = omega / (omega - L)
    partial, prod, rj = 0.0, 1.0, 1.0
    for k in kappa:
        partial += rj * prod
        prod *= k
        rj *= r
    return partial, rj * prod


def s_infinity(
    omega: float,
    L: float,
    kappa_period: Sequence[float],
    kappa_bar: float | None = None,
    enforce_floor: bool = True,
) -> float:
    """``sum_j (omega/(omega-L))^j prod_{i<j} E{kappa_i}`` for a periodic sequence.

    ``kappa_period[0]`` is the term for ``i = 0``. The series is summed over
    one period and closed with the geometric per-period ratio.

    Raises
    ------
    DivergenceError
        If ``omega`` is at or below the floor ``L / (1 - kappa_bar)`` (when
        enforced) or the per-period ratio is not below one.
    """
    kappa = [float(k) for k in kappa_period]
    if not kappa or min(kappa) < 0:
        raise ConfigError("need a nonempty sequence of nonnegative contractions")
    if kappa_bar is None:
        kappa_bar = max(kappa)
    if not omega > L:
        raise DivergenceError(f"omega = {omega} must exceed L = {L}")
    if enforce_floor and not omega > deterministic_floor(L, kappa_bar):
        raise DivergenceError(
            f"omega = {omega} is not above the floor {deterministic_floor(L, kappa_bar)}"
        )
    partial, ratio = _period_terms(omega, L, kappa)
    if not ratio < 1.0:
        raise DivergenceError(f"per-period ratio {ratio} >= 1; the series diverges")
    return partial / (1.0 - ratio)


def s_infinity_truncated(omega: float, L: float, kappa_period: Sequence[float],
                         terms: int) -> tuple[float, float]:
    """Direct partial sum of ``terms`` terms and the bound ``(omega kbar/(omega-L))^terms``
    on the relative size of the next term."""
    kappa = [float(k) for k in kappa_period]
    r = omega / (omega - L)
    total, term = 0.0, 1.0
    for j in range(terms):
        total += term
        term *= r * kappa[j % len(kappa)]
    return total, (r * max(kappa)) ** terms


def smallgain_lhs_deterministic(omega: float, inputs: DeterministicGainInputs) -> float:
    """``gamma s_inf(omega) / (omega - L)``; certified iff below one."""
    c = inputs.constants
    s = s_infinity(omega, inputs.L, c.kappa_period, c.kappa_bar)
    if inputs.gamma == 0.0:
        return 0.0
    return inputs.gamma * s / (omega - inputs.L)


# ------------------------------------------------------------------ bisection


def _floor(mode: str, inputs) -> float:
    if mode == "stochastic":
        return stochastic_floor(inputs.normA, inputs.f)
    return deterministic_floor(inputs.L, inputs.constants.kappa_bar)


def _lhs_or_inf(mode: str, omega: float, inputs) -> float:
    try:
        if mode == "stochastic":
            return smallgain_lhs_stochastic(omega, inputs)
        return smallgain_lhs_deterministic(omega, inputs)
    except (DomainError, DivergenceError):
        return math.inf


def _rho_or_nan(mode: str, omega: float, inputs) -> float:
    try:
        if mode == "stochastic":
            return rho_omega(omega, inputs.normA, inputs.f)
        c = inputs.constants
        return _period_terms(omega, inputs.L, c.kappa_period)[1]
    except (DomainError, DivergenceError):
        return math.nan


def _bisect(mode: str, inputs) -> tuple[float, float]:
    floor = _floor(mode, inputs)
    lo = floor * (1.0 + 1e-9) if floor > 0 else 0.0
    if lo > 0 and _lhs_or_inf(mode, lo, inputs) < 1.0:
        return lo, floor
    hi = OMEGA_MAX
    if not _lhs_or_inf(mode, hi, inputs) < 1.0:
        raise InfeasibleError(
            f"no arrival rate up to {OMEGA_MAX:g} satisfies the small-gain condition",
            binding="omega",
        )
    if lo == 0.0:
        lo = min(1e-12, hi)
    for _ in range(_MAX_ITER):
        if hi - lo <= _RTOL * hi:
            break
        mid = math.sqrt(lo * hi)
        if _lhs_or_inf(mode, mid, inputs) < 1.0:
            hi = mid
        else:
            lo = mid
    return hi, floor


def _curve(mode: str, inputs, omega_star: float, floor: float, points: int = 200) -> LhsCurve:
    start = floor * 1.001 if floor > 0 else omega_star * 1e-2
    stop = max(10.0 * omega_star, 2.0 * start)
    w = np.geomspace(start, stop, points)
    lhs = np.array([_lhs_or_inf(mode, x, inputs) for x in w])
    rho = np.array([_rho_or_nan(mode, x, inputs) for x in w])
    return LhsCurve(w, lhs, rho)


def _min_rate(mode: str, inputs) -> RateBoundResult:
    omega_star, floor = _bisect(mode, inputs)
    tab, _ = _bisect(mode, inputs.with_min_probability())
    return RateBoundResult(
        mode=mode,
        omega_star=omega_star,
        validity_floor=floor,
        tabbara_omega=tab,
        lhs_curve=_curve(mode, inputs, omega_star, floor),
        inputs=inputs,
    )


def min_rate_stochastic(inputs: StochasticGainInputs) -> RateBoundResult:
    """Smallest certified arrival rate under the stochastic protocol.

    The bisection runs on ``[floor (1 + 1e-9), 1e12]`` to relative tolerance
    ``1e-6`` and returns the upper end, so ``lhs(omega_star) < 1``.

    Raises
    ------
    InfeasibleError
        If even ``omega = 1e12`` is not certified.
    """
    return _min_rate("stochastic", inputs)


def min_rate_deterministic(inputs: DeterministicGainInputs) -> RateBoundResult:
    """Smallest certified arrival rate under an a.s. UGES deterministic protocol."""
    return _min_rate("deterministic", inputs)


def tabbara_bound(inputs, mode: str) -> tuple[float, float]:
    """Rate bound with every ``f_n`` replaced by ``min f_n``, and its ratio to ``omega*``."""
    mode = _check_mode(mode)
    omega_star, _ = _bisect(mode, inputs)
    tab, _ = _bisect(mode, inputs.with_min_probability())
    return tab, tab / omega_star


def _check_mode(mode: str) -> str:
    mode = str(mode).lower()
    if mode not in ("stochastic", "deterministic"):
        raise ConfigError(f"mode must be 'stochastic' or 'deterministic', got {mode!r}")
    return mode


# ------------------------------------------------------------------ LTI gains


def x_subsystem_gain(
    wncs: LtiWncs,
    mode: str = "stochastic",
    a1: float = 1.0,
    L1: float = 1.0,
    tol: float = 1e-6,
) -> float:
    """L2 gain of the x-subsystem.

    ``stochastic``: ``(e, w) -> A21 x``. ``deterministic``: inputs
    ``(e, w')`` with ``w = a1 w'`` and output ``L1 (A21 x + a1 E2 w')``; the
    result is ``sqrt(theta)``.

    Raises
    ------
    NotHurwitzError
        If ``A11`` is not Hurwitz (the emulated controller does not stabilise
        the plant without the network).
    """
    mode = _check_mode(mode)
    lam = eigenvalues(wncs.A11)
    if np.any(lam.real >= 0):
        raise NotHurwitzError(
            f"A11 is not Hurwitz (max real part {np.max(lam.real):.6g}); "
            "the controller does not stabilise the networkless loop"
        )
    n_e, n_w = wncs.n_e, wncs.n_w
    if mode == "stochastic":
        q = GainQuery(wncs.A11, np.hstack([wncs.A12, wncs.E1]), wncs.A21)
    else:
        B = np.hstack([wncs.A12, a1 * wncs.E1])
        C = L1 * wncs.A21
        D = np.hstack([np.zeros((n_e, n_e)), a1 * L1 * wncs.E2])
        q = GainQuery(wncs.A11, B, C, D)
    return l2_gain(q, tol=tol)


def stochastic_inputs_lti(wncs: LtiWncs, topology_or_f, gamma: float | None = None,
                          normA: float | None = None) -> StochasticGainInputs:
    """Constants for the stochastic condition; ``gamma`` and ``normA`` may be overridden."""
    f = topology_or_f.node_success() if isinstance(topology_or_f, NetworkTopology) else topology_or_f
    if gamma is None:
        gamma = x_subsystem_gain(wncs, "stochastic")
    if normA is None:
        normA = spectral_norm(abs_matrix(wncs.A22))
    return StochasticGainInputs(gamma, normA, tuple(f))


def deterministic_inputs_lti(
    wncs: LtiWncs,
    topology_or_f,
    L1: float | None = None,
    sqrt_theta: float | None = None,
    normA: float | None = None,
) -> DeterministicGainInputs:
    """Round-robin constants: ``gamma = sqrt(theta)/a1``, ``L = L1 |A22| / a1``.

    ``L1`` defaults to ``sqrt(N)``.
    """
    constants = rr_constants(topology_or_f)
    N = len(constants.kappa_period)
    if L1 is None:
        L1 = math.sqrt(N)
    a1 = constants.a1
    if sqrt_theta is None:
        sqrt_theta = x_subsystem_gain(wncs, "deterministic", a1=a1, L1=L1)
    if normA is None:
        normA = spectral_norm(abs_matrix(wncs.A22))
    return DeterministicGainInputs(sqrt_theta / a1, L1 * normA / a1, constants)
