import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wncs.errors import ConfigError
from wncs.model import (
    ChannelModel,
    Link,
    LtiController,
    LtiPlant,
    NetworkTopology,
    NodeChannel,
    Protocol,
    TransmissionModel,
    build_closed_loop,
    build_sensor_only_loop,
    cumulative_success,
)
from wncs.numerics import abs_matrix, spectral_norm

finite = st.floats(-10, 10, allow_nan=False)


def scalar_loop():
    return (LtiPlant([[0.0]], [[1.0]], [[1.0]]), LtiController([[-1.0]], [[-1.0]], [[1.0]]))


def test_scalar_closed_loop_by_hand():
    w = build_closed_loop(*scalar_loop())
    np.testing.assert_array_equal(w.A11, [[0, 1], [-1, -1]])
    np.testing.assert_array_equal(w.A12, [[0, 1], [-1, 0]])
    np.testing.assert_array_equal(w.A21, [[0, -1], [1, 1]])
    np.testing.assert_array_equal(w.A22, [[0, -1], [1, 0]])
    assert w.E1.shape == (2, 0) and w.E2.shape == (2, 0)


def test_scalar_sensor_only_by_hand():
    w = build_sensor_only_loop(*scalar_loop())
    np.testing.assert_array_equal(w.A12, [[0], [-1]])
    np.testing.assert_array_equal(w.A21, [[0, -1]])
    np.testing.assert_array_equal(w.A22, [[0]])


def test_zero_matrices_give_zero_blocks():
    p = LtiPlant(np.zeros((3, 3)), np.zeros((3, 2)), np.zeros((1, 3)), np.zeros((3, 2)))
    c = LtiController(np.zeros((2, 2)), np.zeros((2, 1)), np.zeros((2, 2)))
    w = build_closed_loop(p, c)
    assert (w.n_x, w.n_e, w.n_w) == (5, 3, 2)
    for blk, shape in ((w.A11, (5, 5)), (w.A12, (5, 3)), (w.A21, (3, 5)), (w.A22, (3, 3)),
                       (w.E1, (5, 2)), (w.E2, (3, 2))):
        assert blk.shape == shape and not blk.any()


def test_zero_controller_sensor_only_has_zero_a22(reactor):
    c = LtiController(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)))
    w = build_sensor_only_loop(reactor.plant, c)
    assert not w.A22.any()


def test_dimension_mismatch_is_explained():
    p = LtiPlant(np.eye(2), np.ones((2, 1)), np.ones((1, 2)))
    with pytest.raises(ConfigError, match="measurements"):
        build_closed_loop(p, LtiController(np.eye(2), np.ones((2, 3)), np.ones((1, 2))))
    with pytest.raises(ConfigError):
        LtiPlant(np.eye(2), np.ones((3, 1)), np.ones((1, 2)))
    with pytest.raises(ConfigError):
        LtiPlant([[math.nan]], [[1.0]], [[1.0]])


def test_batch_reactor_blocks(reactor):
    w = reactor.wncs
    assert (w.n_x, w.n_e) == (8, 4)
    # printed value is 8.8; this loop gives 8.963
    assert spectral_norm(abs_matrix(w.A22)) == pytest.approx(8.963029146579636, rel=1e-9)
    s = build_sensor_only_loop(reactor.plant, reactor.controller)
    assert s.n_e == 2 and not s.A22.any()


@st.composite
def loops(draw):
    n_p, n_u, n_y, n_c, n_w = (draw(st.integers(1, 3)) for _ in range(5))
    m = lambda r, c: draw(arrays(float, (r, c), elements=finite))
    plant = LtiPlant(m(n_p, n_p), m(n_p, n_u), m(n_y, n_p), m(n_p, n_w))
    ctrl = LtiController(m(n_c, n_c), m(n_c, n_y), m(n_u, n_c))
    return plant, ctrl


@given(loops())
def test_closed_loop_round_trip(pc):
    p, c = pc
    w = build_closed_loop(p, c)
    n_p = p.n_p
    np.testing.assert_array_equal(w.A11[:n_p, :n_p], p.Ap)
    np.testing.assert_array_equal(w.A11[n_p:, n_p:], c.Ac)
    np.testing.assert_array_equal(w.A12[:n_p, p.n_y:], p.Bp)
    np.testing.assert_array_equal(w.A12[n_p:, : p.n_y], c.Bc)
    np.testing.assert_array_equal(w.E1[:n_p], p.Ep)
    D = np.zeros((p.n_y + c.Cc.shape[0], w.n_x))
    D[: p.n_y, :n_p] = p.Cp
    D[p.n_y :, n_p:] = c.Cc
    np.testing.assert_allclose(w.A21, -D @ w.A11, atol=1e-12)
    np.testing.assert_allclose(w.A22, -D @ w.A12, atol=1e-12)
    np.testing.assert_allclose(w.E2, -D @ w.E1, atol=1e-12)


@given(loops())
def test_sensor_only_formulas(pc):
    p, c = pc
    w = build_sensor_only_loop(p, c)
    S = np.hstack([p.Cp, np.zeros((p.n_y, c.n_c))])
    np.testing.assert_array_equal(w.A12, np.vstack([np.zeros((p.n_p, p.n_y)), c.Bc]))
    np.testing.assert_allclose(w.A21, -S @ w.A11, atol=1e-12)
    np.testing.assert_allclose(w.A22, -S @ w.A12, atol=1e-12)
    assert w.n_e == p.n_y


def test_cumulative_success_examples(reactor):
    top = reactor.topology
    assert cumulative_success(top, 0) == pytest.approx(0.24, abs=1e-15)
    assert cumulative_success(top, 1) == pytest.approx(0.6, abs=1e-15)
    assert cumulative_success(NetworkTopology(((Link(1.0, (0,)),),)), 0) == 1.0
    with pytest.raises(IndexError):
        cumulative_success(top, 2)


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=5), st.data())
def test_cumulative_success_monotone(probs, data):
    top = NetworkTopology((tuple(Link(p, (i,)) for i, p in enumerate(probs)),))
    i = data.draw(st.integers(0, len(probs) - 1))
    lower = list(probs)
    lower[i] *= data.draw(st.floats(0.01, 1.0))
    top2 = NetworkTopology((tuple(Link(p, (j,)) for j, p in enumerate(lower)),))
    assert cumulative_success(top2, 0) <= cumulative_success(top, 0)
    assert 0 < cumulative_success(top, 0) <= 1


def test_topology_must_partition_coordinates():
    with pytest.raises(ConfigError):
        NetworkTopology(((Link(0.5, (0,)),), (Link(0.5, (0,)),)))
    with pytest.raises(ConfigError):
        NetworkTopology(((Link(0.5, (0, 2)),),))
    with pytest.raises(ConfigError):
        Link(0.0, (0,))
    top = NetworkTopology.from_probabilities([[0.3, 0.8], [0.75, 0.8]])
    assert top.N == 2 and top.n_e == 4 and top.node_coords(1) == (2, 3)
    np.testing.assert_allclose(top.node_success(), [0.24, 0.6])
    flat = top.with_node_success([0.5, 0.5])
    assert flat.link_counts == (1, 1) and flat.node_coords(0) == (0, 1)


def test_channel_validation():
    with pytest.raises(ConfigError):
        NodeChannel([[1.0, 0.0], [0.1, 1.0]], [1, 1])
    with pytest.raises(ConfigError):
        NodeChannel([[1.0]], [0.0])
    ch = NodeChannel([[0.2, 0.012], [0.012, 0.063]], [1, 1])
    with pytest.raises(ConfigError):
        ChannelModel((ch,), a=0.0)
    with pytest.raises(ConfigError):
        ChannelModel((ch,), p_max=-1.0)


def test_protocol_and_rate():
    assert Protocol.parse("RR") is Protocol.ROUND_ROBIN
    assert Protocol.parse("stochastic") is Protocol.STOCHASTIC_UNIFORM
    with pytest.raises(ConfigError):
        Protocol.parse("tdma-ish")
    assert TransmissionModel.from_tau_bar(0.005).rate == pytest.approx(200.0)
    with pytest.raises(ConfigError):
        TransmissionModel(math.inf)
