import math

import numpy as np
import pytest

from weakmorse import (CriticalPointRecord, DiscretePath, MassSystem, WeakCriticalSequence,
                       action_value, audit_generalized_solution, blow_up, bump,
                       collision_direction, detect_collisions, direction_angle, isolation_check,
                       pair_frame, pair_frame_inverse, restricted_quadform_convergence,
                       uniform_times)
from weakmorse.action import kinetic_energy_segments
from weakmorse.exceptions import CaseMismatch, InsufficientData, WindowOutOfDomain


def synthetic_sequence(n_records=6, M=201):
    """Body 1 sweeps past body 0 at t = 1/4 and past body 2 at t = 3/4.

    The closest approach is ``delta_n = eps_n^(2/3)``, so eps/delta -> 0.
    """
    sys = MassSystem(2, (1.0, 1.0, 1.0), 1.0)
    t = uniform_times(0.0, 1.0, M)
    eps = [4.0 ** -n for n in range(1, n_records + 1)]
    records = []
    for e in eps:
        delta = e ** (2 / 3)
        q = np.zeros((M, 3, 2))
        q[:, 2, 0] = 2.0
        q[:, 1, 0] = 4.0 * (t - 0.25)
        q[:, 1, 1] = delta
        q -= q.mean(axis=1, keepdims=True)
        p = DiscretePath(sys, t, q)
        records.append(CriticalPointRecord(p, e, action_value(sys, p, e), 0.0, 0, ()))
    return WeakCriticalSequence(tuple(eps), records, records[-1].path, 100.0, {}, 0)


def test_synthetic_family_has_two_binary_events():
    seq = synthetic_sequence()
    events = detect_collisions(seq)
    assert [e.kind for e in events] == ["binary", "binary"]
    assert [e.cluster.members for e in events] == [(0, 1), (1, 2)]
    assert events[0].time == pytest.approx(0.25, abs=1e-12)
    assert events[1].time == pytest.approx(0.75, abs=1e-12)
    assert all(e.isolated for e in events)
    assert all(e.lambda_fit == 0.0 for e in events)


def test_detection_needs_three_records():
    with pytest.raises(InsufficientData):
        detect_collisions(synthetic_sequence(2))


def test_isolation_window_and_floor():
    seq = synthetic_sequence()
    events = detect_collisions(seq)
    assert isolation_check(seq, events[0], 0.2, events)
    # body 2 stays at distance 2 from body 0, inside a floor of 5
    assert not isolation_check(seq, events[0], 0.2, events, floor=5.0)
    with pytest.raises(WindowOutOfDomain):
        isolation_check(seq, events[0], 0.3, events)


def test_pair_frame_round_trip_and_kinetic_identity(rng):
    sys = MassSystem(3, (1.0, 2.5, 0.7, 1.3), 1.0)
    q = rng.standard_normal((9, 4, 3))
    q -= np.tensordot(q, sys.m, axes=(1, 0))[:, None, :] / sys.total_mass
    p = DiscretePath(sys, uniform_times(0, 2, 9), q)
    for pair in ((0, 1), (1, 3), (2, 0)):
        fr = pair_frame(sys, p, pair)
        back = pair_frame_inverse(sys, fr)
        np.testing.assert_allclose(back.nodes, p.nodes, atol=1e-14)
        np.testing.assert_allclose(fr.kinetic(), kinetic_energy_segments(sys, p), rtol=1e-12)
    with pytest.raises(ValueError):
        pair_frame(sys, p, (1, 1))


def test_bump_profile():
    phi = bump(2.0)
    assert phi(0.0) == 1.0
    assert phi(2.0) == 0.0 and phi(-3.0) == 0.0
    s, h = 0.7, 1e-6
    assert phi.derivative(s) == pytest.approx((phi(s + h) - phi(s - h)) / (2 * h), rel=1e-8)


# -- flagship ---------------------------------------------------------------------------

def test_flagship_has_one_isolated_binary_event(flagship_events):
    assert len(flagship_events) == 1
    ev = flagship_events[0]
    assert ev.kind == "binary" and ev.isolated
    assert ev.cluster.members == (0, 1)
    assert ev.lambda_fit == 0.0


def test_flagship_blow_up_pericenter(flagship, flagship_events):
    ev = flagship_events[0]
    prof = blow_up(flagship, ev, len(flagship.records) - 1)
    k = int(np.argmin(np.abs(prof.s)))
    assert prof.s[k] == 0.0
    assert np.linalg.norm(prof.xi[k]) == pytest.approx(1.0, rel=1e-12)
    assert np.linalg.norm(prof.xi, axis=1).min() >= 1.0 - 1e-12
    with pytest.raises(CaseMismatch):
        blow_up(flagship, ev, 0, case="infinite_lambda")


def test_flagship_directions_agree(flagship, flagship_events):
    ev = flagship_events[0]
    u_minus = collision_direction(flagship, ev, "before")
    u_plus = collision_direction(flagship, ev, "after")
    assert direction_angle(u_minus, u_plus) <= 1e-2


def test_flagship_rescaled_form_converges(flagship, flagship_events):
    out = restricted_quadform_convergence(flagship, flagship_events[0], bump(2.0),
                                          records=range(4, 8))
    rel = out["rel_diff"]
    assert rel[-1] <= 0.05
    assert all(b < a for a, b in zip(rel, rel[1:]))


def test_audit_flags_a_corrupted_path(flagship, flagship_events):
    clean = audit_generalized_solution(flagship, flagship_events)
    assert clean["i_finite_events"] and clean["ii_equations_off_windows"]
    assert clean["iv_cluster_energy_continuous"]
    rng = np.random.default_rng(0)
    p = flagship.limit_path
    nodes = np.array(p.nodes)
    noise = 1e-3 * rng.standard_normal(nodes[1:-1].shape)
    noise -= noise.mean(axis=1, keepdims=True)
    nodes[1:-1] += noise
    noisy = DiscretePath(p.system, p.times, nodes)
    seq = WeakCriticalSequence(flagship.eps_schedule, flagship.records, noisy,
                               flagship.action_bound, {}, flagship.index_liminf)
    bad = audit_generalized_solution(seq, flagship_events)
    assert not bad["ii_equations_off_windows"]
    assert bad["el_residual_max"] > 100 * clean["el_residual_max"]
    assert not bad["passed"]
    assert math.isfinite(bad["energy_drift_rel"])
