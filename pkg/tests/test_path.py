import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weakmorse import (DiscretePath, MassSystem, PathVariation, eval_at, graded_times,
                       h1_inner, make_path, min_pair_separation, resample, uniform_times)
from weakmorse.exceptions import EndpointNotCentered, GridMismatch, OutOfDomain

SYS = MassSystem(3, (1.0, 2.0), 1.0)


def centered(sys, q):
    q = np.asarray(q, float)
    return q - sys.m @ q / sys.total_mass


def test_constant_path_when_endpoints_agree():
    q = centered(SYS, [[0, 0, 0], [1, 0, 0]])
    p = make_path(SYS, q, q, M=9)
    assert np.abs(p.nodes - q).max() == 0.0


def test_linear_midpoint_is_mean():
    qa = centered(SYS, [[0, 0, 0], [1, 0, 0]])
    qb = centered(SYS, [[0, 1, 0], [3, 0, 2]])
    p = make_path(SYS, qa, qb, M=11)
    np.testing.assert_allclose(p.nodes[5], 0.5 * (qa + qb), atol=1e-15)


def test_seeded_nodes_are_stored_verbatim(rng):
    nodes = np.stack([centered(SYS, rng.standard_normal((2, 3))) for _ in range(7)])
    p = make_path(SYS, nodes[0], nodes[-1], init=nodes, times=uniform_times(0, 1, 7))
    np.testing.assert_array_equal(p.nodes, nodes)


def test_uncentered_endpoint_rejected():
    with pytest.raises(EndpointNotCentered):
        make_path(SYS, [[0, 0, 0], [1, 0, 0]], [[0, 0, 0], [1, 0, 0]], M=5)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), M=st.integers(3, 40))
def test_constructors_center_every_node(seed, M):
    r = np.random.default_rng(seed)
    sys = MassSystem(2, tuple(r.uniform(0.2, 3, 3)), 0.9)
    qa = centered(sys, r.standard_normal((3, 2)))
    qb = centered(sys, r.standard_normal((3, 2)))
    p = make_path(sys, qa, qb, M=M)
    assert np.abs(np.tensordot(p.nodes, sys.m, axes=(1, 0))).max() < 1e-12
    q = resample(p, np.sort(np.concatenate([[0, 1], r.uniform(0, 1, 5)])))
    assert np.abs(np.tensordot(q.nodes, sys.m, axes=(1, 0))).max() < 1e-12


def test_eval_at_nodes_and_midpoints(rng):
    nodes = np.stack([centered(SYS, rng.standard_normal((2, 3))) for _ in range(6)])
    p = make_path(SYS, nodes[0], nodes[-1], init=nodes, times=uniform_times(0, 5, 6))
    for k, t in enumerate(p.times):
        np.testing.assert_array_equal(eval_at(p, t), nodes[k])
    np.testing.assert_allclose(eval_at(p, 2.5), 0.5 * (nodes[2] + nodes[3]), atol=1e-15)
    with pytest.raises(OutOfDomain):
        eval_at(p, 5.5)


def test_eval_at_against_dense_resampling(rng):
    nodes = np.stack([centered(SYS, rng.standard_normal((2, 3))) for _ in range(8)])
    p = make_path(SYS, nodes[0], nodes[-1], init=nodes, times=uniform_times(0, 1, 8))
    fine = resample(p, uniform_times(0, 1, 71))
    ts = rng.uniform(0, 1, 50)
    np.testing.assert_allclose(eval_at(p, ts), eval_at(fine, ts), atol=1e-13)


def test_interpolation_error_is_second_order():
    sys = MassSystem(2, (1.0, 1.0), 1.0)

    def curve(t):
        x = np.stack([np.cos(3 * t), np.sin(2 * t)], axis=-1)
        return np.stack([-x, x], axis=1)

    errs = []
    ts = np.linspace(0, 1, 1001)
    for M in (9, 17, 33, 65, 129):
        t = uniform_times(0, 1, M)
        p = DiscretePath(sys, t, curve(t))
        errs.append(np.abs(eval_at(p, ts) - curve(ts)).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() >= 1.9


def test_h1_stencil_single_bump():
    sys = MassSystem(2, (1.0, 1.0), 1.0)
    times = uniform_times(0, 1, 11)
    vals = np.zeros((11, 2, 2))
    vals[4, 1, 0] = 1.0
    u = PathVariation(vals, times)
    assert h1_inner(sys, u, u) == pytest.approx(0.1 + 2 / 0.1, abs=1e-12)


def test_h1_zero_symmetric_and_positive(rng):
    times = uniform_times(0, 2, 15)
    zero = PathVariation(np.zeros((15, 2, 3)), times)
    assert h1_inner(SYS, zero, zero) == 0.0
    for _ in range(100):
        u = PathVariation.from_interior(rng.standard_normal((13, 2, 3)), times)
        v = PathVariation.from_interior(rng.standard_normal((13, 2, 3)), times)
        assert abs(h1_inner(SYS, u, v) - h1_inner(SYS, v, u)) < 1e-14 * max(1, abs(h1_inner(SYS, u, v)))
        assert h1_inner(SYS, u, u) > 0


def test_variation_must_vanish_at_ends():
    with pytest.raises(ValueError):
        PathVariation(np.ones((5, 2, 3)), uniform_times(0, 1, 5))
    u = PathVariation(np.zeros((5, 2, 3)), uniform_times(0, 1, 5))
    v = PathVariation(np.zeros((6, 2, 3)), uniform_times(0, 1, 6))
    with pytest.raises(GridMismatch):
        h1_inner(SYS, u, v)


def test_constant_separation_ties_to_window_start():
    q = centered(SYS, [[0, 0, 0], [3, 0, 0]])
    p = make_path(SYS, q, q, times=uniform_times(1, 4, 10))
    s = min_pair_separation(p, 0, 1, (1.5, 3.0))
    assert s.delta == pytest.approx(3.0)
    assert s.t_star == 1.5


def test_linear_crossing_matches_point_to_line_distance():
    sys = MassSystem(3, (1.0, 1.0), 1.0)
    a = np.array([-4.0, 1.0, 0.5])
    b = np.array([5.0, -0.3, 0.7])
    # relative position moves on the line a -> b in t in [0, 1]
    qa = np.array([-a / 2, a / 2])
    qb = np.array([-b / 2, b / 2])
    p = make_path(sys, qa, qb, M=13)
    s = min_pair_separation(p, 0, 1)
    db = b - a
    w = -(a @ db) / (db @ db)
    assert s.delta == pytest.approx(np.linalg.norm(a + w * db), abs=1e-10)
    assert s.t_star == pytest.approx(w, abs=1e-10)


def test_one_segment_window():
    sys = MassSystem(3, (1.0, 1.0), 1.0)
    qa = np.array([[-1.0, 0, 0], [1.0, 0, 0]])
    qb = np.array([[-2.0, 0, 0], [2.0, 0, 0]])
    p = make_path(sys, qa, qb, M=5)
    s = min_pair_separation(p, 0, 1, (p.times[1], p.times[2]))
    assert s.delta == pytest.approx(2.5)
    assert s.t_star == pytest.approx(p.times[1])


def test_graded_grid_spacing():
    t = graded_times(0, 1000, 256, 500.0, 1e-3)
    h = np.diff(t)
    assert t[0] == 0 and t[-1] == 1000
    assert h.min() == pytest.approx(1e-3, rel=1e-2)
    assert np.all(h > 0)


def test_path_json_round_trip(rng):
    nodes = np.stack([centered(SYS, rng.standard_normal((2, 3))) for _ in range(5)])
    p = make_path(SYS, nodes[0], nodes[-1], init=nodes,
                  times=graded_times(0, 1, 5, 0.4, 0.05))
    q = DiscretePath.from_json(p.to_json())
    np.testing.assert_array_equal(q.nodes, p.nodes)
    np.testing.assert_array_equal(q.times, p.times)
