import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wncs.errors import ConfigError, DomainError, InfeasibleError
from wncs.lpsolve import LpProblem, solve
from wncs.model import ChannelModel, NodeChannel
from wncs.power import (
    SimplexPoint,
    StabilityConstant,
    build_lp,
    c_tau,
    constraint_margin,
    corollary_coefficients,
    deterministic_power_lhs,
    gamma_plus_L_from_c,
    multi_node_stability_lhs,
    node_success_probability,
    phi_outage,
    simplex_grid,
    single_node_constraint,
    sinr,
    sinr_vector,
    solve_problem2,
    stability_region,
    two_link_epsilon_star,
    two_link_feasibility,
    two_link_interval,
    two_link_powers,
)
from wncs.protocols import rr_constants
from wncs.stability import DeterministicGainInputs, smallgain_lhs_deterministic

G2 = [[0.2, 0.012], [0.012, 0.063]]
CH2 = NodeChannel(G2, [1.0, 1.0])
C162 = StabilityConstant.from_value(1.62)
ETA = math.sqrt(0.5)


def test_sinr_examples():
    assert sinr(0, [3.0], NodeChannel([[1.0]], [1.0])) == pytest.approx(3.0)
    ch = NodeChannel([[1.0, 1.0], [1.0, 1.0]], [1e-12, 1e-12])
    np.testing.assert_allclose(sinr_vector([5.0, 5.0], ch), [1.0, 1.0], rtol=1e-12)
    # gains[j, i] is the gain from transmitter j to receiver i
    ch = NodeChannel([[1.0, 0.5], [0.25, 2.0]], [1.0, 1.0])
    np.testing.assert_allclose(sinr_vector([1.0, 2.0], ch), [1 / (1 + 0.5), 4 / (1 + 0.5)])


def test_phi_examples():
    assert phi_outage(1.0) == pytest.approx(math.exp(-1))
    assert phi_outage(1e12) == pytest.approx(1.0)
    assert phi_outage(0.0) == 0.0
    assert phi_outage(1 / 0.2138) == pytest.approx(0.8075, abs=1e-4)


@given(st.integers(0, 2**32 - 1))
def test_phi_monotone_in_own_and_other_power(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    ch = NodeChannel(rng.uniform(0.01, 1.0, (n, n)), rng.uniform(0.1, 2.0, n))
    p = rng.uniform(0.1, 50.0, n)
    # compare ln Phi = -a / SINR; Phi itself underflows for tiny SINR
    base = -1.0 / sinr_vector(p, ch)
    i, j = rng.choice(n, 2, replace=False)
    up = p.copy()
    up[i] *= 1.01
    after = -1.0 / sinr_vector(up, ch)
    assert after[i] > base[i] and after[j] < base[j]
    assert np.all(np.diff(phi_outage(np.sort(rng.uniform(0.0, 100.0, 50)))) >= 0)


def test_two_link_reference_values():
    lo, hi = two_link_interval(C162, CH2)
    assert (lo, hi) == (pytest.approx(0.0043739, abs=1e-7), pytest.approx(0.9956261, abs=1e-7))
    p = two_link_powers(0.38, CH2, C162)
    assert p == (pytest.approx(9.8444178, rel=1e-7), pytest.approx(17.6703933, rel=1e-7))
    a, b, c = corollary_coefficients(CH2, C162)
    assert (a, b, c) == (pytest.approx(0.0073390, abs=1e-7), pytest.approx(0.0083370, abs=1e-7),
                         pytest.approx(-0.0042004, abs=1e-7))
    eps = two_link_epsilon_star(CH2, C162)
    assert eps == pytest.approx(0.37803204, abs=1e-7)
    assert eps == pytest.approx(0.38, abs=0.01)


def test_powers_solve_the_two_constraint_lines():
    eps = 0.38
    A, b = build_lp(SimplexPoint((eps, 1 - eps)), CH2, C162)
    p = np.linalg.solve(A[:2], b[:2])
    np.testing.assert_allclose(two_link_powers(eps, CH2, C162), p, rtol=1e-12)


def test_eps_star_matches_dense_scan():
    lo, hi = two_link_interval(C162, CH2)
    grid = np.linspace(lo, hi, 100_001)[1:-1]
    tot = [sum(two_link_powers(e, CH2, C162)) for e in grid]
    assert two_link_epsilon_star(CH2, C162) == pytest.approx(grid[int(np.argmin(tot))], abs=1e-4)


def test_interval_edge_cases():
    ch = NodeChannel([[0.2, 1e-300], [1e-300, 0.063]], [1.0, 1.0])
    lo, hi = two_link_interval(C162, ch)
    assert lo == pytest.approx(0.0, abs=1e-12) and hi == pytest.approx(1.0, abs=1e-12)
    # C^2 = 4 g12 g21 / (g11 g22): empty interval
    cz = StabilityConstant.from_value(2 * math.sqrt(0.012**2 / (0.2 * 0.063)))
    with pytest.raises(InfeasibleError):
        two_link_interval(cz, CH2)
    with pytest.raises(DomainError):
        two_link_powers(0.999, CH2, C162)


def test_symmetric_case():
    g, C = 0.1, 3.0
    ch = NodeChannel([[g, g], [g, g]], [1.0, 1.0])
    c = StabilityConstant.from_value(C)
    assert two_link_epsilon_star(ch, c) == pytest.approx(0.5, abs=1e-12)
    p = two_link_powers(0.5, ch, c)
    assert p == (pytest.approx(2 / ((C - 2) * g)), pytest.approx(2 / ((C - 2) * g)))


def test_c_tau_examples():
    c = c_tau(0.005, 11.59, 0.0, ETA, 1e-6, 1.0)
    assert c.c_tau == pytest.approx(1.62, abs=5e-3)
    assert c.c_tau == pytest.approx(1.6202326, abs=1e-7)
    assert gamma_plus_L_from_c(1.62, 0.005, ETA) == pytest.approx(11.5927, abs=1e-4)
    # bracket = e^-1 gives C = 1/a
    tau = (math.exp(-1) + 1e-6) * (1 - ETA) / 11.59
    assert c_tau(tau, 11.59, 0.0, ETA).c_tau == pytest.approx(1.0, rel=1e-12)
    assert c_tau(tau, 11.59, 0.0, ETA, a=2.0).c_tau == pytest.approx(0.5, rel=1e-12)
    with pytest.raises(InfeasibleError) as e:
        c_tau(0.5, 11.59, 0.0, ETA)
    assert e.value.binding == "tau_bar"
    with pytest.raises(InfeasibleError) as e:
        c_tau(0.005, 11.59, 0.0, ETA, delta=1.0)
    assert e.value.binding == "delta"


def test_tau_bar_bound():
    rep = two_link_feasibility(CH2, 0.005, 11.59, 0.0, ETA, 1e-6, 1.0, 70.0, c_override=1.62)
    assert rep.tau_bound == pytest.approx(0.0205, rel=1e-2)
    assert rep.tau_bound == pytest.approx(0.0204066, rel=1e-5)
    assert rep.feasible and rep.p_max_ok
    free = NodeChannel([[0.2, 1e-300], [1e-300, 0.063]], [1.0, 1.0])
    rep = two_link_feasibility(free, 0.005, 11.59, 0.0, ETA, 1e-6)
    assert rep.tau_bound == pytest.approx((1 - ETA) * (1e-6 + 1) / 11.59)
    low = two_link_feasibility(CH2, 0.005, 11.59, 0.0, ETA, 1e-6, 1.0, 10.0, c_override=1.62)
    assert not low.feasible and low.p_max_ok is False


def test_single_node_constraint():
    # the rounded published powers sit a hair below the bound (margin about -1e-4)
    chk = single_node_constraint([9.9, 17.6], 0.005, 11.59, 0.0, ETA, CH2, delta=1e-6)
    assert abs(chk.margin) < 2e-4
    exact = single_node_constraint(two_link_powers(0.38, CH2, C162), 0.005,
                                   gamma_plus_L_from_c(1.62, 0.005, ETA), 0.0, ETA, CH2, delta=1e-6)
    assert exact.satisfied and exact.margin == pytest.approx(0.0, abs=1e-9)
    assert not single_node_constraint([1e-9, 1e-9], 0.005, 11.59, 0.0, ETA, CH2).satisfied
    hopeless = single_node_constraint([1e3, 1e3], 0.5, 11.59, 0.0, ETA, CH2)
    assert not hopeless.attainable and not hopeless.satisfied


def test_multi_node_lhs_consistent_with_rate_bound():
    # one-link nodes without interference; choose powers so that Phi gives (0.24, 0.6)
    f = (0.24, 0.6)
    nodes = tuple(NodeChannel([[1.0]], [1.0]) for _ in f)
    ch = ChannelModel(nodes, a=1.0)
    p = [-1.0 / math.log(v) for v in f]
    tau, gamma, L = 1 / 400.0, 31.366, 12.6756
    lhs = multi_node_stability_lhs(p, tau, gamma, L, ch)
    ref = smallgain_lhs_deterministic(400.0, DeterministicGainInputs(gamma, L, rr_constants(f)))
    assert lhs == pytest.approx(ref, rel=1e-9)
    assert deterministic_power_lhs(f, tau, 0.0, L) == 0.0
    # lossless limit: the contraction is eta every slot
    big = multi_node_stability_lhs([1e12, 1e12], tau, gamma, L, ch)
    flat = smallgain_lhs_deterministic(400.0, DeterministicGainInputs(gamma, L, rr_constants([1.0, 1.0])))
    assert big == pytest.approx(flat, rel=1e-9)


def test_build_lp_shapes():
    c = StabilityConstant.from_value(2.0)
    A, b = build_lp(SimplexPoint((1.0,)), NodeChannel([[0.5]], [2.0]), c, p_max=10.0)
    np.testing.assert_allclose(A, [[0.5 * 2.0], [-1.0]])
    np.testing.assert_allclose(b, [2.0, -10.0])
    eps = 0.3
    A, b = build_lp(SimplexPoint((eps, 1 - eps)), CH2, C162, p_max=70.0)
    np.testing.assert_allclose(A, [[0.2 * eps * 1.62, -0.012], [-0.012, 0.063 * (1 - eps) * 1.62],
                                   [-1, 0], [0, -1]])
    np.testing.assert_allclose(b, [1, 1, -70, -70])


def test_build_lp_four_links(four_links):
    ch = four_links.channel.nodes[0]
    A, b = build_lp(SimplexPoint((0.25,) * 4), ch, StabilityConstant.from_value(3.0), p_max=70.0)
    assert A.shape == (8, 4)
    off = A[:4] - np.diag(np.diag(A[:4]))
    np.testing.assert_allclose(off, off.T)


def test_simplex_grid():
    g = simplex_grid(3, 4)
    assert len(g) == 3 and all(abs(sum(s.q) - 1) < 1e-12 for s in g)
    assert len(simplex_grid(2, 200)) == 199
    with pytest.raises(ConfigError):
        SimplexPoint((0.0, 1.0))
    with pytest.raises(ConfigError):
        SimplexPoint((0.5, 0.6))


def test_lp_agrees_with_closed_form_on_interval():
    lo, hi = two_link_interval(C162, CH2)
    for eps in np.linspace(lo, hi, 23)[1:-1]:
        A, b = build_lp(SimplexPoint((eps, 1 - eps)), CH2, C162)
        out = solve(LpProblem(np.ones(2), A, b))
        np.testing.assert_allclose(out.x, two_link_powers(eps, CH2, C162), rtol=1e-8)


def test_problem2_two_links_converges_to_closed_form():
    closed = sum(two_link_powers(two_link_epsilon_star(CH2, C162), CH2, C162))
    objs = [solve_problem2(CH2, C162, r).objective for r in (25, 50, 100, 200)]
    assert all(b <= a + 1e-12 for a, b in zip(objs, objs[1:]))
    assert objs[-1] == pytest.approx(closed, rel=1e-2)
    sol = solve_problem2(CH2, C162, 200)
    assert sol.q_star.q == pytest.approx((0.38, 0.62))
    assert sol.objective == pytest.approx(27.514811, rel=1e-7)


@given(st.integers(0, 2**32 - 1))
def test_returned_lp_solutions_satisfy_nonlinear_constraint(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))
    g = rng.uniform(0.001, 0.02, (n, n)) + np.diag(rng.uniform(0.1, 0.5, n))
    ch = NodeChannel(g, rng.uniform(0.5, 2.0, n))
    c = StabilityConstant.from_value(float(rng.uniform(1.0, 4.0)))
    try:
        sol = solve_problem2(ch, c, 12)
    except InfeasibleError:
        return
    lhs, rhs = constraint_margin(sol.powers, ch, c)
    assert lhs >= rhs * (1 - 1e-9) and sol.feasible


def test_problem2_infeasibility_binding():
    with pytest.raises(InfeasibleError) as e:
        solve_problem2(ChannelModel((CH2,), p_max=1.0), C162, 20)
    assert e.value.binding == "P_max"
    tight = StabilityConstant.from_value(0.05)
    with pytest.raises(InfeasibleError) as e:
        solve_problem2(CH2, tight, 20)
    assert e.value.binding == "tau_bar"
    with pytest.raises(ConfigError):
        solve_problem2(ChannelModel((CH2,), a=2.0), C162, 20)


def test_four_link_solution(four_links):
    ch = four_links.channel
    c = c_tau(0.001, 11.59, 0.0, ETA)
    sol = solve_problem2(ch, c, 12)
    assert sol.feasible and sol.margin >= -1e-6
    np.testing.assert_allclose(sol.powers, [15.40, 13.12, 14.42, 9.74], atol=0.01)
    assert sol.q_star.q == pytest.approx((0.25,) * 4)
    finer = solve_problem2(ch, c, 24)
    assert finer.objective <= sol.objective + 1e-12


def test_region_boundary_through_optimum():
    reg = stability_region(CH2, C162, (0.0, 70.0), (0.0, 70.0), 141)
    assert not reg.feasible[0, 0]
    p1, p2 = two_link_powers(two_link_epsilon_star(CH2, C162), CH2, C162)
    i = int(np.argmin(np.abs(reg.p1 - p1)))
    cell = reg.p2[1] - reg.p2[0]
    assert abs(reg.lower[i] - p2) <= 2 * cell
    # with the other power at zero, feasibility is monotone in own power
    col = reg.feasible[:, 0]
    assert np.all(np.diff(col.astype(int)) >= 0)
    # the constraint holds on the boundary to interpolation accuracy
    lhs = node_success_probability([reg.p1[i], reg.lower[i]], CH2)
    assert lhs == pytest.approx(C162.bracket, rel=1e-2)
