"""Acceptance checks shared by the test suite and ``wncs validate``.

Each ``criterion_N`` returns a :class:`CriterionResult` listing its
sub-checks. Published values are included as targets where the criterion
uses them. Checks that cannot be met are reported as failures, never relaxed.
"""

from __future__ import annotations

import itertools
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import builtin_names, load_builtin
from .lpsolve import LpProblem, solve
from .model import ChannelModel, NodeChannel, Protocol, TransmissionModel
from .numerics import GainQuery, l2_gain, make_rng, sweep_gain
from .power import (
    StabilityConstant,
    build_lp,
    c_tau,
    constraint_margin,
    gamma_plus_L_from_c,
    solve_problem2,
    two_link_epsilon_star,
    two_link_feasibility,
    two_link_powers,
    SimplexPoint,
)
from .protocols import (
    CoverOrderWarning,
    cover_time_pgf,
    expected_cover_time,
    exact_expected_cover_time,
    rr_constants,
    rr_eta,
    sample_cover_times,
)
from .sim import Dynamics, SimConfig, monte_carlo_decay, simulate, simulate_batch
from .stability import (
    deterministic_inputs_lti,
    min_rate_deterministic,
    min_rate_stochastic,
    stochastic_inputs_lti,
)

__all__ = ["Check", "CriterionResult", "CRITERIA", "run_all"]


@dataclass(frozen=True)
class Check:
    label: str
    passed: bool
    detail: str


@dataclass
class CriterionResult:
    number: int
    name: str
    budget: float
    checks: list[Check] = field(default_factory=list)
    elapsed: float = 0.0
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks) and self.elapsed <= self.budget

    def add(self, label: str, passed: bool, detail: str):
        self.checks.append(Check(label, bool(passed), detail))

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        failed = [c.label for c in self.checks if not c.passed]
        if self.elapsed > self.budget:
            failed.append(f"runtime {self.elapsed:.1f}s > {self.budget:g}s")
        tail = f" (failed: {', '.join(failed)})" if failed else ""
        return f"[{status}] criterion {self.number}: {self.name} [{self.elapsed:.2f}s]{tail}"

    def report(self) -> str:
        lines = [self.line()]
        lines += [f"    {'ok ' if c.passed else 'BAD'} {c.label}: {c.detail}" for c in self.checks]
        lines += [f"    note: {n}" for n in self.notes]
        return "\n".join(lines)


def _close(x: float, target: float, tol: float) -> bool:
    return abs(x - target) <= tol


def _rel(x: float, target: float) -> float:
    return abs(x - target) / abs(target)


def _timed(number: int, name: str, budget: float):
    def deco(fn: Callable[..., None]):
        def run(seed: int = 0) -> CriterionResult:
            res = CriterionResult(number, name, budget)
            t0 = time.perf_counter()
            fn(res, seed)
            res.elapsed = time.perf_counter() - t0
            return res
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return deco


F_81 = (0.24, 0.6)


@_timed(1, "round-robin protocol constants", 1.0)
def criterion_1(res: CriterionResult, seed: int):
    sc = load_builtin("rate_two_nodes")
    f = sc.topology.node_success()
    res.add("f_n", np.allclose(f, F_81, rtol=0, atol=1e-15), f"{f.tolist()}")
    c = rr_constants(sc.topology)
    res.add("kappa_bar", _close(c.kappa_bar, 0.93, 5e-3), f"{c.kappa_bar:.6f} vs 0.93")
    res.add("E{kappa} node-1 slot", _close(c.expected_kappa(1), 0.93, 5e-3),
            f"{c.expected_kappa(1):.6f} vs 0.93")
    res.add("E{kappa} node-2 slot", _close(c.expected_kappa(2), 0.82, 5e-3),
            f"{c.expected_kappa(2):.6f} vs 0.82")
    res.add("eta", _close(c.eta, math.sqrt(0.5), 1e-15), f"{c.eta!r} vs sqrt(0.5)")
    L1 = math.sqrt(sc.topology.N)
    res.add("L1", _close(L1, 1.41, 5e-3) and L1 == math.sqrt(2), f"{L1:.6f} vs 1.41")


@_timed(2, "cover time of the stochastic protocol", 10.0)
def criterion_2(res: CriterionResult, seed: int):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CoverOrderWarning)
        ET = expected_cover_time(F_81)
        res.add("E{T} formula", _close(ET, 7.5, 1e-12), f"{ET!r}")
        samples = sample_cover_times(make_rng(seed, 10), F_81, 100_000)
        mean = float(samples.mean())
        se = float(samples.std(ddof=1) / math.sqrt(samples.size))
        z = (mean - ET) / se
        res.add("Monte Carlo mean within 3 SE", abs(z) <= 3.0,
                f"mean {mean:.4f} +- {se:.4f} (z = {z:.1f}) vs {ET}")
        res.notes.append(f"inclusion-exclusion mean for this protocol: "
                         f"{exact_expected_cover_time(F_81):.6f}")
        g1 = cover_time_pgf(F_81, 1.0)
        res.add("G_T(1) = 1", _close(g1, 1.0, 1e-12), f"{g1!r}")
        h = 1e-5
        d = (cover_time_pgf(F_81, 1 + h) - cover_time_pgf(F_81, 1 - h)) / (2 * h)
        res.add("G_T'(1) = E{T}", _rel(d, ET) <= 1e-4, f"{d:.8f} (rel err {_rel(d, ET):.2e})")


@_timed(3, "two-link power design", 30.0)
def criterion_3(res: CriterionResult, seed: int):
    sc = load_builtin("power_two_links")
    ch = sc.require_channel()
    stab, pw = sc.section("stability"), sc.section("power")
    tau, eta, delta = sc.transmission.tau_bar, float(stab["eta"]), float(pw["delta"])
    c = StabilityConstant.from_value(pw["c_tau"], a=ch.a, delta=delta)
    gl = gamma_plus_L_from_c(c.c_tau, tau, eta, delta, ch.a)
    res.add("gamma+L back-out", _close(gl, 11.59, 0.01), f"{gl:.4f} vs 11.59")
    rep = two_link_feasibility(ch, tau, gl, 0.0, eta, delta, ch.a, ch.p_max, c_override=c.c_tau)
    res.add("eps*", _close(rep.eps_star, 0.38, 0.01), f"{rep.eps_star:.6f} vs 0.38")
    p1, p2 = rep.powers
    res.add("p1*", _rel(p1, 9.9) <= 0.02, f"{p1:.4f} vs 9.9")
    res.add("p2*", _rel(p2, 17.6) <= 0.02, f"{p2:.4f} vs 17.6")
    res.add("tau_bar bound", _rel(rep.tau_bound, 0.0205) <= 0.01,
            f"{rep.tau_bound:.6f} vs 0.0205")
    res.add("P_max feasible", bool(rep.p_max_ok), f"max power {max(p1, p2):.3f} <= {ch.p_max}")
    lp = solve_problem2(ch, c, 200)
    closed = p1 + p2
    res.add("LP grid (r=200) vs closed form", _rel(lp.objective, closed) <= 0.01,
            f"{lp.objective:.6f} vs {closed:.6f} at q* = {lp.q_star.q}")


@_timed(4, "symmetric two-link case", 1.0)
def criterion_4(res: CriterionResult, seed: int):
    g, s2, C = 0.1, 1.0, 3.0
    ch = NodeChannel([[g, g], [g, g]], [s2, s2])
    c = StabilityConstant.from_value(C)
    formula = 2 * s2 / ((C - 2) * g)
    eps = two_link_epsilon_star(ch, c)
    res.add("eps* = 1/2", _close(eps, 0.5, 1e-12), f"{eps!r}")
    p = two_link_powers(eps, ch, c)
    A, b = build_lp(SimplexPoint((0.5, 0.5)), ch, c)
    lp = solve(LpProblem(np.ones(2), A, b))
    for name, val in (("closed form p1", p[0]), ("closed form p2", p[1]),
                      ("LP p1", lp.x[0]), ("LP p2", lp.x[1])):
        res.add(name, _rel(val, formula) <= 1e-6, f"{val!r} vs {formula!r}")
    grid = solve_problem2(ch, c, 50)
    res.add("LP grid objective", _rel(grid.objective, 2 * formula) <= 1e-6,
            f"{grid.objective!r} vs {2 * formula!r}")


def vertex_enumeration(c: np.ndarray, A: np.ndarray, b: np.ndarray) -> float:
    """Best objective over all basic feasible points of ``A p >= b, p >= 0``."""
    m, n = A.shape
    G = np.vstack([A, np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    best = math.inf
    for S in itertools.combinations(range(m + n), n):
        M = G[list(S)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, h[list(S)])
        if np.all(G @ x >= h - 1e-9 * (1 + np.abs(h))):
            best = min(best, float(c @ x))
    return best


def random_feasible_lp(rng: np.random.Generator):
    m = int(rng.integers(1, 7))
    n = int(rng.integers(1, 4))
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(0.0, 2.0, n)
    b = A @ x0 - rng.uniform(0.0, 1.0, m)
    c = rng.uniform(0.1, 2.0, n)
    return c, A, b


@_timed(5, "LP solver vs vertex enumeration", 30.0)
def criterion_5(res: CriterionResult, seed: int):
    rng = make_rng(seed, 5)
    worst, bad = 0.0, 0
    for _ in range(500):
        c, A, b = random_feasible_lp(rng)
        out = solve(LpProblem(c, A, b))
        ref = vertex_enumeration(c, A, b)
        if not out.optimal:
            bad += 1
            continue
        err = abs(out.objective - ref) / (1 + abs(ref))
        worst = max(worst, err)
        bad += err > 1e-8
    res.add("500 instances within 1e-8", bad == 0, f"mismatches {bad}, worst {worst:.2e}")


def random_stable_system(rng: np.random.Generator) -> GainQuery:
    n = int(rng.integers(1, 9))
    m = int(rng.integers(1, 4))
    p = int(rng.integers(1, 4))
    A = rng.normal(size=(n, n))
    lam = np.linalg.eigvals(A)
    A -= (lam.real.max() + rng.uniform(0.2, 2.0)) * np.eye(n)
    D = rng.normal(size=(p, m)) if rng.random() < 0.5 else np.zeros((p, m))
    return GainQuery(A, rng.normal(size=(n, m)), rng.normal(size=(p, n)), D)


def similar(q: GainQuery, rng: np.random.Generator) -> GainQuery:
    n = q.A.shape[0]
    T = np.eye(n) + 0.3 * rng.normal(size=(n, n)) / math.sqrt(n)
    Ti = np.linalg.inv(T)
    return GainQuery(T @ q.A @ Ti, T @ q.B, q.C @ Ti, q.D)


@_timed(6, "L2 gain vs frequency sweep", 60.0)
def criterion_6(res: CriterionResult, seed: int):
    rng = make_rng(seed, 6)
    worst_gap, worst_sim, bad_b, bad_s = 0.0, 0.0, 0, 0
    for _ in range(50):
        q = random_stable_system(rng)
        g = l2_gain(q, tol=1e-6)
        s, _ = sweep_gain(q)
        gap = (g - s) / g
        worst_gap = max(worst_gap, abs(gap))
        bad_b += not (s <= g * (1 + 1e-12) and g <= s * (1 + 1e-4))
        g_tight = l2_gain(q, tol=1e-9)
        g_sim = l2_gain(similar(q, rng), tol=1e-9)
        d = abs(g_sim - g_tight) / g_tight
        worst_sim = max(worst_sim, d)
        bad_s += d > 1e-6
    res.add("sweep <= gain <= sweep (1 + 1e-4)", bad_b == 0,
            f"violations {bad_b}, worst relative gap {worst_gap:.2e}")
    res.add("similarity invariance 1e-6", bad_s == 0,
            f"violations {bad_s}, worst {worst_sim:.2e}")


def batch_reactor_rates(seed: int = 0):
    """Rate bounds for the two-node batch-reactor scenario: (stochastic, deterministic)."""
    sc = load_builtin("rate_two_nodes")
    w = sc.wncs
    return (min_rate_stochastic(stochastic_inputs_lti(w, sc.topology)),
            min_rate_deterministic(deterministic_inputs_lti(w, sc.topology)))


@_timed(7, "rate-bound properties", 30.0)
def criterion_7(res: CriterionResult, seed: int):
    rs, rd = batch_reactor_rates(seed)
    ref = load_builtin("rate_two_nodes").section("reference")
    for r in (rs, rd):
        res.add(f"{r.mode}: bisection consistency", r.is_consistent(),
                f"lhs({r.omega_star:.4f}) = {r.lhs(r.omega_star):.9f}, "
                f"lhs(0.99 w*) = {r.lhs(0.99 * r.omega_star):.6f}")
        res.add(f"{r.mode}: w* <= min-probability bound, ratio > 1.2",
                r.omega_star <= r.tabbara_omega and r.ratio > 1.2,
                f"{r.omega_star:.4f} vs {r.tabbara_omega:.4f} (ratio {r.ratio:.4f})")
    res.notes.append(
        f"published annotations: stochastic {ref.get('omega_stochastic')} / "
        f"{ref.get('omega_minprob_stochastic')}, deterministic {ref.get('omega_deterministic')} / "
        f"{ref.get('omega_minprob_deterministic')}"
    )
    for name in ("power_two_links", "power_four_links"):
        sc = load_builtin(name)
        w = sc.wncs
        for r in (min_rate_stochastic(stochastic_inputs_lti(w, sc.topology)),
                  min_rate_deterministic(deterministic_inputs_lti(w, sc.topology))):
            res.add(f"{name} {r.mode}: consistency and ordering",
                    r.is_consistent() and r.omega_star <= r.tabbara_omega,
                    f"w* = {r.omega_star:.4f}, min-probability {r.tabbara_omega:.4f}")


def decay_config(omega: float, seed: int, horizon: float = 5.0) -> SimConfig:
    sc = load_builtin("rate_two_nodes")
    sim = sc.section("simulation")
    x0 = np.asarray(sim.get("x0", np.ones(sc.wncs.n_x)), dtype=float)
    return SimConfig(Dynamics.lti(sc.wncs), sc.topology, Protocol.ROUND_ROBIN,
                     TransmissionModel(omega), x0, np.zeros(sc.wncs.n_e), horizon, seed)


@_timed(8, "closed-loop decay at the round-robin bound", 300.0)
def criterion_8(res: CriterionResult, seed: int):
    _, rd = batch_reactor_rates(seed)
    est = monte_carlo_decay(decay_config(rd.omega_star, seed), trials=500)
    res.add("c < 0 with 95% confidence", est.decays,
            f"c = {est.c:.4f}, 95% CI ({est.c_ci[0]:.4f}, {est.c_ci[1]:.4f}) at w = {rd.omega_star:.3f}")
    res.add("mean norm at horizon < 1% of initial", est.final_ratio < 0.01,
            f"ratio {est.final_ratio:.4f}")
    w_low = 0.2 * rd.validity_floor
    low = monte_carlo_decay(decay_config(w_low, seed), trials=500)
    res.add("contrast at 0.2 x floor does not decay",
            (not math.isnan(low.c) and low.c >= 0) or low.divergent_fraction > 0.1,
            f"w = {w_low:.3f}: c = {low.c:.4f}, CI ({low.c_ci[0]:.4f}, {low.c_ci[1]:.4f}), "
            f"divergent {low.divergent}/{low.trials}")


def _scenario_names() -> list[str]:
    out = []
    for name in builtin_names():
        sc = load_builtin(name)
        if sc.topology is not None and sc.transmission is not None and sc.plant is not None:
            out.append(name)
    return out


@_timed(9, "simulator exactness invariants", 60.0)
def criterion_9(res: CriterionResult, seed: int):
    for name in _scenario_names():
        sc = load_builtin(name)
        w = sc.wncs
        dyn = Dynamics.lti(w)
        tr = sc.transmission
        top = sc.topology
        dt = tr.tau_bar / 20
        traj = simulate(dyn, top, sc.protocol, tr, np.ones(w.n_x), np.ones(w.n_e),
                        horizon=min(1.0, 400 * tr.tau_bar), seed=seed, dt=dt)
        n_x = w.n_x
        x_ok = zero_ok = keep_ok = True
        for j in traj.jumps:
            x_ok &= np.array_equal(j.z_pre[:n_x], j.z_post[:n_x])
            e_pre, e_post = j.z_pre[n_x:], j.z_post[n_x:]
            zeroed = set()
            for link, ok in zip(top.nodes[j.node], j.link_ok):
                if ok:
                    zeroed.update(link.coords)
            for i in range(w.n_e):
                if i in zeroed:
                    zero_ok &= e_post[i] == 0.0
                else:
                    keep_ok &= e_post[i] == e_pre[i]
        nj = len(traj.jumps)
        res.add(f"{name}: x continuous at jumps", x_ok and nj > 0, f"{nj} jumps")
        res.add(f"{name}: successful-link coordinates zeroed", zero_ok, "exact equality")
        res.add(f"{name}: other coordinates preserved", keep_ok, "exact equality")
        trials = 100
        H = max(1e5 / (trials * tr.rate), 10 * tr.tau_bar)
        b = simulate_batch(dyn, top, sc.protocol, tr, np.zeros(w.n_x + w.n_e), H, seed,
                           range(trials), dt=dt, n_record=1)
        ia = b.interarrivals
        se = ia.std(ddof=1) / math.sqrt(ia.size)
        z = (ia.mean() - tr.tau_bar) / se
        res.add(f"{name}: interarrival mean = 1/w within 3 SE",
                abs(z) <= 3 and ia.size >= 1e5 * 0.95,
                f"{ia.mean():.6g} vs {tr.tau_bar:.6g} over {ia.size} gaps (z = {z:.2f})")


@_timed(10, "four-link LP", 30.0)
def criterion_10(res: CriterionResult, seed: int):
    sc = load_builtin("power_four_links")
    ch = sc.require_channel()
    stab, pw = sc.section("stability"), sc.section("power")
    c = c_tau(sc.transmission.tau_bar, float(stab["gamma_plus_L"]), 0.0, float(stab["eta"]),
              float(pw["delta"]), ch.a)
    sol = solve_problem2(ch, c, int(pw.get("grid", 12)))
    res.add("feasible solution", sol.feasible and np.all(sol.powers <= ch.p_max),
            f"p = {np.round(sol.powers, 4).tolist()}, q* = {tuple(round(v, 4) for v in sol.q_star.q)}")
    lhs, rhs = constraint_margin(sol.powers, ch, c)
    res.add("constraint holds to 1e-6", lhs - rhs >= -1e-6, f"prod Phi = {lhs:.9f}, rhs = {rhs:.9f}")
    ref = np.array(sc.section("reference").get("p_star", [15, 10, 14, 11]), dtype=float)
    res.notes.append(f"C = {c.c_tau:.6f}; distance to published {ref.tolist()}: "
                     f"{np.round(sol.powers - ref, 3).tolist()} (assumed cross-gains)")


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 11)}


def run_all(numbers=None, seed: int = 0) -> list[CriterionResult]:
    numbers = sorted(CRITERIA) if numbers is None else list(numbers)
    return [CRITERIA[n](seed) for n in numbers]
