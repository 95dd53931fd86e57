"""Monte Carlo simulation of the networked loop as a stochastic hybrid system.

Between transmissions the stacked state ``z = (x, e)`` follows the flow;
transmissions arrive as a Poisson process, and at each one the scheduled
node's successful links reset their e-coordinates to zero.

Trials are simulated as a batch. Each trial pre-samples its events from its
own stream ``make_rng(seed, trial)``, so results do not depend on how trials
are grouped or scheduled. Every trial integrates with RK4 on a shared time
grid, and a step is cut exactly at each of that trial's jump instants.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DivergenceError
from .model import LtiWncs, NetworkTopology, Protocol, TransmissionModel
from .numerics import make_rng, rk4_step, sample_exponential, sample_uniform_node, spectral_norm

__all__ = [
    "Dynamics",
    "JumpRecord",
    "Trajectory",
    "SimConfig",
    "DecayEstimate",
    "ProtocolStats",
    "default_dt",
    "simulate",
    "simulate_batch",
    "BatchResult",
    "monte_carlo_decay",
    "empirical_protocol_stats",
    "cover_times_from_sequence",
]

DIVERGENCE_FACTOR = 1e8


@dataclass(frozen=True)
class Dynamics:
    """Flow of the stacked state.

    ``flow(t, z)`` receives a batch ``z`` of shape ``(M, n_x + n_e)`` and a
    time array of shape ``(M,)`` and returns ``dz/dt`` of the same shape.
    ``scale`` is a characteristic rate used for the default step size.
    ``matrix`` is set for autonomous linear flows ``z' = matrix z``; the RK4
    update over a fixed step is then precomputed as a matrix polynomial.
    """

    n_x: int
    n_e: int
    flow: Callable[[np.ndarray, np.ndarray], np.ndarray]
    scale: float = 1.0
    matrix: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.n_x + self.n_e

    @classmethod
    def lti(cls, wncs: LtiWncs, w: Callable | None = None) -> "Dynamics":
        """Linear flow; ``w(t)`` maps a time array ``(M,)`` to ``(M, n_w)``."""
        F = wncs.flow_matrix()
        Ft = F.T.copy()
        E = wncs.disturbance_matrix()
        if w is None or wncs.n_w == 0:
            def flow(t, z):
                return z @ Ft
            return cls(wncs.n_x, wncs.n_e, flow, spectral_norm(wncs.A11), F)
        Et = E.T.copy()

        def flow(t, z):
            wt = np.asarray(w(np.broadcast_to(t, (z.shape[0],))), dtype=float)
            return z @ Ft + wt.reshape(z.shape[0], -1) @ Et
        return cls(wncs.n_x, wncs.n_e, flow, spectral_norm(wncs.A11))

    @classmethod
    def from_maps(cls, f: Callable, g: Callable, n_x: int, n_e: int,
                  w: Callable | None = None, scale: float = 1.0) -> "Dynamics":
        """Flow from ``x' = f(x, e, w)`` and ``e' = g(x, e, w)``.

        ``f`` and ``g`` are called with row batches ``x (M, n_x)``,
        ``e (M, n_e)``, ``w (M, n_w)`` (``w`` is ``None`` when no signal is
        given) and must return row batches.
        """
        def flow(t, z):
            x, e = z[:, :n_x], z[:, n_x:]
            wt = None if w is None else np.asarray(w(np.broadcast_to(t, (z.shape[0],))), dtype=float)
            return np.hstack([f(x, e, wt), g(x, e, wt)])
        return cls(n_x, n_e, flow, scale)


@dataclass(frozen=True)
class JumpRecord:
    t: float
    k: int
    node: int
    link_ok: tuple[int, ...]
    z_pre: np.ndarray = field(repr=False)
    z_post: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    jumps: tuple[JumpRecord, ...]
    arrival_times: np.ndarray
    n_x: int
    divergent: bool = False

    @property
    def x(self) -> np.ndarray:
        return self.states[:, : self.n_x]

    @property
    def e(self) -> np.ndarray:
        return self.states[:, self.n_x :]


def default_dt(dynamics: Dynamics, transmission: TransmissionModel) -> float:
    """``min(tau_bar / 20, 1e-3 / |A11|)``."""
    dt = transmission.tau_bar / 20.0
    if dynamics.scale > 0:
        dt = min(dt, 1e-3 / dynamics.scale)
    return dt


# ------------------------------------------------------------------- events


def _link_tables(topology: NetworkTopology):
    N = topology.N
    Lmax = max(topology.link_counts)
    prob = np.zeros((N, Lmax))
    mask = np.zeros((N, Lmax, topology.n_e), dtype=bool)
    for n, node in enumerate(topology.nodes):
        for i, link in enumerate(node):
            prob[n, i] = link.probability
            mask[n, i, list(link.coords)] = True
    return prob, mask


def _sample_events(seed: int, trial: int, rate: float, horizon: float, N: int, Lmax: int,
                   protocol: Protocol):
    """Arrival times in ``[0, horizon]``, granted nodes and link uniforms of one trial."""
    rng = make_rng(seed, trial)
    mean = rate * horizon
    chunk = int(mean + 6.0 * math.sqrt(mean) + 16)
    times, nodes, unif = [], [], []
    t_last = 0.0
    k0 = 0
    while True:
        tau = sample_exponential(rng, rate, chunk)
        node = sample_uniform_node(rng, N, chunk)
        u = rng.random((chunk, Lmax))
        t = t_last + np.cumsum(tau)
        if protocol is Protocol.ROUND_ROBIN:
            node = (np.arange(k0, k0 + chunk) % N).astype(node.dtype)
        times.append(t)
        nodes.append(node)
        unif.append(u)
        t_last = float(t[-1])
        k0 += chunk
        if t_last > horizon:
            break
    t = np.concatenate(times)
    keep = t <= horizon
    return t[keep], np.concatenate(nodes)[keep], np.concatenate(unif)[keep]


# ------------------------------------------------------------------- engine


def _full_step(dynamics: Dynamics, dt: float):
    """Uncut RK4 step of length ``dt`` for a batch."""
    if dynamics.matrix is not None:
        hF = dt * np.asarray(dynamics.matrix, dtype=float)
        I = np.eye(hF.shape[0])
        # RK4 applied to z' = F z is exactly this degree-4 Taylor polynomial
        Phi = I + hF @ (I + hF @ (I / 2 + hF @ (I / 6 + hF / 24)))
        PhiT = Phi.T.copy()

        def step(t0, z):
            out = z @ PhiT
            if not np.all(np.isfinite(out)):
                raise DivergenceError("RK4 step produced a non-finite state")
            return out
        return step

    def step(t0, z):
        return rk4_step(dynamics.flow, np.full(z.shape[0], t0), z, dt)
    return step


@dataclass
class BatchResult:
    """Norms of ``(x, e)`` on the record grid for every trial of a batch."""

    times: np.ndarray
    norms: np.ndarray
    divergent: np.ndarray
    interarrivals: np.ndarray
    final_states: np.ndarray
    trajectory: Trajectory | None = None


def simulate_batch(
    dynamics: Dynamics,
    topology: NetworkTopology,
    protocol,
    transmission: TransmissionModel,
    z0: np.ndarray,
    horizon: float,
    seed: int,
    trials: Sequence[int],
    dt: float | None = None,
    n_record: int = 500,
    log_jumps: bool = False,
    record_states: bool = False,
) -> BatchResult:
    """Integrate the trials ``trials`` (their indices select RNG streams)."""
    protocol = Protocol.parse(protocol)
    if topology.n_e != dynamics.n_e:
        raise ConfigError(
            f"topology carries {topology.n_e} error coordinates, dynamics has {dynamics.n_e}"
        )
    if not (horizon > 0 and math.isfinite(horizon)):
        raise ConfigError(f"horizon must be finite and positive, got {horizon}")
    trials = list(trials)
    M = len(trials)
    n_x, n = dynamics.n_x, dynamics.n
    z0 = np.asarray(z0, dtype=float).reshape(-1)
    if z0.size != n:
        raise ConfigError(f"initial state has {z0.size} entries, expected {n}")
    if dt is None:
        dt = default_dt(dynamics, transmission)
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    if dt > transmission.tau_bar / 20.0 * (1 + 1e-12):
        raise ConfigError(f"dt = {dt} exceeds tau_bar / 20 = {transmission.tau_bar / 20}")
    n_steps = max(1, int(math.ceil(horizon / dt - 1e-9)))
    dt = horizon / n_steps
    stride = max(1, n_steps // max(1, n_record))
    rec_steps = list(range(0, n_steps + 1, stride))
    if rec_steps[-1] != n_steps:
        rec_steps.append(n_steps)
    rec_index = {s: i for i, s in enumerate(rec_steps)}

    prob, mask = _link_tables(topology)
    N, Lmax = prob.shape
    events = [_sample_events(seed, tr, transmission.rate, horizon, N, Lmax, protocol)
              for tr in trials]
    Kmax = max(len(ev[0]) for ev in events)
    T = np.full((M, Kmax + 1), np.inf)
    NODE = np.zeros((M, Kmax + 1), dtype=np.int64)
    U = np.ones((M, Kmax + 1, Lmax))
    inter = []
    for i, (t, nd, u) in enumerate(events):
        T[i, : len(t)] = t
        NODE[i, : len(t)] = nd
        U[i, : len(t)] = u
        if len(t):
            inter.append(np.diff(np.concatenate([[0.0], t])))
    interarrivals = np.concatenate(inter) if inter else np.zeros(0)

    z = np.tile(z0, (M, 1))
    ptr = np.zeros(M, dtype=np.int64)
    rows = np.arange(M)
    divergent = np.zeros(M, dtype=bool)
    limit = DIVERGENCE_FACTOR * max(1.0, float(np.linalg.norm(z0)))
    norms = np.empty((M, len(rec_steps)))
    states = np.empty((len(rec_steps), n)) if record_states else None
    norms[:, 0] = np.linalg.norm(z, axis=1)
    if record_states:
        states[0] = z[0]
    jumps: list[JumpRecord] = []

    full_step = _full_step(dynamics, dt)
    nxt = T[rows, ptr]
    check_every = 64
    for step in range(1, n_steps + 1):
        t0 = (step - 1) * dt
        t_end = step * dt
        J = np.nonzero(~divergent & (nxt <= t_end))[0]
        zJ = z[J] if J.size else None
        if not divergent.any():
            z = full_step(t0, z)
        else:
            live = np.nonzero(~divergent)[0]
            z[live] = full_step(t0, z[live])
        if J.size:
            # redo trials with a jump inside the step, cutting at each jump
            curJ = np.full(J.size, t0)
            while True:
                nJ = nxt[J]
                stop = np.minimum(nJ, t_end)
                a = np.nonzero(curJ < stop)[0]
                if a.size:
                    h = (stop[a] - curJ[a])[:, None]
                    zJ[a] = rk4_step(dynamics.flow, curJ[a], zJ[a], h)
                    curJ[a] = stop[a]
                jm = np.nonzero((nJ <= t_end) & (curJ >= nJ))[0]
                if jm.size == 0:
                    break
                idx = J[jm]
                k = ptr[idx]
                node = NODE[idx, k]
                ok = U[idx, k] < prob[node]
                zero = np.any(ok[:, :, None] & mask[node], axis=1)
                if log_jumps:
                    pre = zJ[jm].copy()
                e_part = zJ[jm, n_x:]
                e_part[zero] = 0.0
                zJ[jm, n_x:] = e_part
                if log_jumps:
                    for r in range(jm.size):
                        nl = topology.link_counts[node[r]]
                        jumps.append(JumpRecord(float(T[idx[r], k[r]]), int(k[r]) + 1,
                                                int(node[r]), tuple(int(v) for v in ok[r, :nl]),
                                                pre[r], zJ[jm[r]].copy()))
                ptr[idx] += 1
                nxt[idx] = T[idx, ptr[idx]]
            z[J] = zJ
        recording = step in rec_index
        if recording or step % check_every == 0:
            nrm = np.linalg.norm(z, axis=1)
            blown = ~divergent & ~(nrm < limit)
            if np.any(blown):
                divergent |= blown
                z[blown] = 0.0
            if recording:
                j = rec_index[step]
                norms[:, j] = np.where(divergent, np.nan, nrm)
                if record_states:
                    states[j] = np.nan if divergent[0] else z[0]

    times = np.array(rec_steps) * dt
    traj = None
    if record_states:
        arrivals = T[0][np.isfinite(T[0])]
        traj = Trajectory(times, states, tuple(jumps), arrivals, n_x, bool(divergent[0]))
    return BatchResult(times, norms, divergent, interarrivals, z.copy(), traj)


def simulate(
    dynamics: Dynamics,
    topology: NetworkTopology,
    protocol,
    transmission: TransmissionModel,
    x0,
    e0,
    horizon: float,
    seed: int,
    dt: float | None = None,
    n_record: int = 1000,
    trial: int = 0,
) -> Trajectory:
    """Simulate one trajectory with a full jump log.

    A state whose norm exceeds ``1e8`` times the initial norm is flagged
    divergent and the remaining samples are NaN.
    """
    z0 = np.concatenate([np.asarray(x0, dtype=float).reshape(-1),
                         np.asarray(e0, dtype=float).reshape(-1)])
    res = simulate_batch(dynamics, topology, protocol, transmission, z0, horizon, seed,
                         [trial], dt, n_record, log_jumps=True, record_states=True)
    return res.trajectory


# --------------------------------------------------------------------- decay


@dataclass(frozen=True)
class SimConfig:
    dynamics: Dynamics
    topology: NetworkTopology
    protocol: Protocol
    transmission: TransmissionModel
    x0: np.ndarray
    e0: np.ndarray
    horizon: float
    seed: int = 0
    dt: float | None = None
    n_record: int = 500

    @property
    def z0(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.x0, dtype=float).reshape(-1),
                               np.asarray(self.e0, dtype=float).reshape(-1)])


@dataclass(frozen=True)
class DecayEstimate:
    """Log-linear fit ``log E|z(t)| ~ log(K |z0|) + c t`` over the tail half.

    ``c < 0`` means decay. ``c_ci`` is a 95% trial-bootstrap interval.
    """

    c: float
    K: float
    c_ci: tuple[float, float]
    residual: float
    times: np.ndarray = field(repr=False)
    mean_norm: np.ndarray = field(repr=False)
    q90: np.ndarray = field(repr=False)
    q99: np.ndarray = field(repr=False)
    trials: int = 0
    divergent: int = 0
    final_ratio: float = math.nan
    interarrival_mean: float = math.nan
    interarrival_count: int = 0

    @property
    def divergent_fraction(self) -> float:
        return self.divergent / self.trials if self.trials else math.nan

    @property
    def decays(self) -> bool:
        """Upper end of the confidence interval below zero."""
        return bool(self.c_ci[1] < 0)

    def rows(self):
        for t, m, a, b in zip(self.times, self.mean_norm, self.q90, self.q99):
            yield float(t), float(m), float(a), float(b)


def _fit(times: np.ndarray, mean: np.ndarray):
    X = np.vstack([np.ones_like(times), times]).T
    coef, *_ = np.linalg.lstsq(X, np.log(mean), rcond=None)
    resid = np.log(mean) - X @ coef
    return float(coef[1]), float(coef[0]), float(np.sqrt(np.mean(resid**2)))


def _run_chunks(cfg: SimConfig, trials: int, workers: int | None, chunk: int = 250):
    ids = list(range(trials))
    parts = [ids[i : i + chunk] for i in range(0, trials, chunk)]

    def run(part):
        return simulate_batch(cfg.dynamics, cfg.topology, cfg.protocol, cfg.transmission,
                              cfg.z0, cfg.horizon, cfg.seed, part, cfg.dt, cfg.n_record)

    if workers and workers > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run, parts))
    else:
        results = [run(p) for p in parts]
    return results


def monte_carlo_decay(cfg: SimConfig, trials: int = 500, n_boot: int = 1000,
                      workers: int | None = None) -> DecayEstimate:
    """Fit the decay exponent of the mean state norm over ``trials`` runs.

    Divergent trials are counted and left out of the mean and quantiles.
    """
    if trials < 100:
        raise ConfigError(f"need at least 100 trials, got {trials}")
    results = _run_chunks(cfg, trials, workers)
    times = results[0].times
    norms = np.vstack([r.norms for r in results])
    divergent = np.concatenate([r.divergent for r in results])
    inter = np.concatenate([r.interarrivals for r in results])
    z0n = float(np.linalg.norm(cfg.z0))
    good = norms[~divergent]
    n_div = int(divergent.sum())
    if good.shape[0] == 0:
        nan = np.full(times.shape, np.nan)
        return DecayEstimate(math.nan, math.nan, (math.nan, math.nan), math.nan, times, nan,
                             nan, nan, trials, n_div, math.nan, float(inter.mean()), inter.size)
    mean = good.mean(axis=0)
    q90 = np.quantile(good, 0.9, axis=0)
    q99 = np.quantile(good, 0.99, axis=0)
    tail = times >= 0.5 * times[-1]
    floor = np.finfo(float).tiny
    c, logk, resid = _fit(times[tail], np.maximum(mean[tail], floor))
    rng = make_rng(cfg.seed, 2**31 - 1)
    counts = rng.multinomial(good.shape[0], np.full(good.shape[0], 1.0 / good.shape[0]), size=n_boot)
    boot_means = counts @ good[:, tail] / good.shape[0]
    Xt = times[tail]
    Xc = Xt - Xt.mean()
    logs = np.log(np.maximum(boot_means, floor))
    slopes = (logs - logs.mean(axis=1, keepdims=True)) @ Xc / (Xc @ Xc)
    ci = (float(np.quantile(slopes, 0.025)), float(np.quantile(slopes, 0.975)))
    K = math.exp(logk) / z0n if z0n > 0 else math.nan
    return DecayEstimate(c, K, ci, resid, times, mean, q90, q99, trials, n_div,
                         float(mean[-1] / z0n) if z0n > 0 else math.nan,
                         float(inter.mean()) if inter.size else math.nan, inter.size)


# ----------------------------------------------------------------- protocol


@dataclass(frozen=True)
class ProtocolStats:
    jumps: int
    grant_freq: np.ndarray
    success_freq: np.ndarray
    cover_times: np.ndarray

    @property
    def cover_mean(self) -> float:
        return float(self.cover_times.mean())

    @property
    def cover_sem(self) -> float:
        return float(self.cover_times.std(ddof=1) / math.sqrt(self.cover_times.size))

    def histogram(self) -> tuple[np.ndarray, np.ndarray]:
        values, counts = np.unique(self.cover_times, return_counts=True)
        return values, counts


def cover_times_from_sequence(nodes: np.ndarray, success: np.ndarray, N: int) -> np.ndarray:
    """Consecutive cover times of a transmission sequence.

    Counting restarts after every completed cover; an incomplete final
    stretch is discarded.
    """
    out = []
    seen = np.zeros(N, dtype=bool)
    n_seen = 0
    start = 0
    for k in np.nonzero(success)[0]:
        nd = nodes[k]
        if not seen[nd]:
            seen[nd] = True
            n_seen += 1
            if n_seen == N:
                out.append(k + 1 - start)
                start = k + 1
                seen[:] = False
                n_seen = 0
    return np.array(out, dtype=np.int64)


def empirical_protocol_stats(topology: NetworkTopology, protocol, jumps: int = 100_000,
                             seed: int = 0) -> ProtocolStats:
    """Grant and success frequencies per node and cover times over one long run.

    A transmission counts as a success for node ``n`` when ``n`` is granted
    and every one of its links delivers.
    """
    protocol = Protocol.parse(protocol)
    if jumps < 1:
        raise ConfigError("need at least one jump")
    prob, _ = _link_tables(topology)
    N, Lmax = prob.shape
    rng = make_rng(seed, 0)
    if protocol is Protocol.ROUND_ROBIN:
        nodes = np.arange(jumps) % N
    else:
        nodes = sample_uniform_node(rng, N, jumps)
    u = rng.random((jumps, Lmax))
    counts = np.array(topology.link_counts)
    ok = (u < prob[nodes]) | (np.arange(Lmax)[None, :] >= counts[nodes][:, None])
    success = ok.all(axis=1)
    grant = np.bincount(nodes, minlength=N) / jumps
    succ = np.bincount(nodes[success], minlength=N) / jumps
    return ProtocolStats(jumps, grant, succ, cover_times_from_sequence(nodes, success, N))
