"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` or directly as a script.
"""
import math
import time
import warnings

import numpy as np
import pytest

from weakmorse import (ActionFunctional, DiscretePath, MassSystem, asymptotic_angle_numeric,
                       asymptotic_angle_theory, audit_generalized_solution, bump,
                       collision_direction, direction_angle, index_i, index_i_lambda,
                       integrate_limit_orbit, make_path, min_pair_separation, minimize,
                       parabola_oracle, restricted_quadform_convergence, transverse_count,
                       transverse_index, uniform_times, verify_index_bound)
from weakmorse.core import project_center_of_mass

GRID_ALPHAS = (1.0, 1.5)
GRID_LAMBDAS = (0.0, 1.0, 3.0)


def report(capsys, n, ok, detail):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)
    return ok


# -- criterion bodies ------------------------------------------------------------------

def _random_path(rng, N, M=64):
    sys = MassSystem(3, tuple(rng.uniform(0.5, 2.0, N)), 1.0)
    while True:
        qa = project_center_of_mass(sys, rng.standard_normal((N, 3)) * 2)
        qb = project_center_of_mass(sys, rng.standard_normal((N, 3)) * 2)
        p = make_path(sys, qa, qb, times=uniform_times(0, 1, M))
        w = np.sin(np.pi * p.times)[:, None, None]
        nodes = p.nodes + w * project_center_of_mass(sys, rng.standard_normal((N, 3)) * 0.5)
        p = DiscretePath(sys, p.times, nodes)
        seps = [min_pair_separation(p, i, j).delta for i in range(N) for j in range(i + 1, N)]
        if min(seps) > 0.2:
            return sys, p


def criterion_1():
    rng = np.random.default_rng(1)
    worst_g = worst_h = 0.0
    t0 = time.time()
    step = 1e-5
    for k in range(100):
        sys, p = _random_path(rng, (2, 3, 4)[k % 3])
        F = ActionFunctional(sys, p, 0.01)
        y = F.encode(p)
        g = F.grad(y)
        fd = np.empty_like(y)
        for i in range(len(y)):
            e = np.zeros_like(y)
            e[i] = step
            fd[i] = (F.value(y + e) - F.value(y - e)) / (2 * step)
        worst_g = max(worst_g, np.linalg.norm(g - fd) / np.linalg.norm(g))
        v = rng.standard_normal(len(y))
        hv = F.hess(y).matvec(v)
        fdh = (F.grad(y + step * v) - F.grad(y - step * v)) / (2 * step)
        worst_h = max(worst_h, np.linalg.norm(hv - fdh) / np.linalg.norm(hv))
    elapsed = time.time() - t0
    ok = worst_g < 1e-6 and worst_h < 1e-6 and elapsed < 60
    return ok, f"grad rel err {worst_g:.1e}, Hessian rel err {worst_h:.1e}, {elapsed:.1f}s"


def criterion_2():
    grid = np.linspace(0.05, 1.95, 20)
    ok = (index_i(1.0) == 1 and index_i(0.5) == 1 and index_i(1.5) == 3
          and all(index_i_lambda(a, 0.0) == index_i(a) for a in grid))
    return ok, f"i(1)={index_i(1.0)}, i(0.5)={index_i(0.5)}, i(1.5)={index_i(1.5)}"


def criterion_3():
    errs = {}
    for a in GRID_ALPHAS:
        for lam in GRID_LAMBDAS:
            orbit = integrate_limit_orbit(a, lam, s_max=1e30, R=1e6)
            errs[a, lam] = abs(asymptotic_angle_numeric(orbit, 1e6)
                               - asymptotic_angle_theory(a, lam))
    kepler = abs(asymptotic_angle_theory(1.0, 0.0) - 2 * math.pi) + errs[1.0, 0.0]
    worst = max(errs.values())
    return worst <= 1e-3 and kepler <= 1e-3, f"max angle error {worst:.1e}"


def criterion_4():
    orbit = integrate_limit_orbit(1.0, 0.0, 1.0, s_max=10.0)
    s = np.linspace(-10, 10, 2001)
    err = np.abs(orbit.state(s)[0] - parabola_oracle(s)[0]).max()
    en = np.abs(orbit.energy_residual()).max()
    return err <= 1e-6 and en <= 1e-9, f"position error {err:.1e}, energy residual {en:.1e}"


def criterion_5():
    rows = []
    for a in GRID_ALPHAS:
        for lam in GRID_LAMBDAS:
            rep = transverse_index(a, lam, L=200.0, mesh=4000)
            rows.append((a, lam, rep.transverse_count, rep.i_alpha_lambda))
    bound = all(c >= i for _, _, c, i in rows)
    kepler = [c for a, lam, c, _ in rows if a == 1.0 and lam == 0.0][0]
    growth = [transverse_count(1.0, math.inf, L, int(20 * L)) for L in (50, 100, 200)]
    grows = growth[0] < growth[1] < growth[2]
    short = [f"({a},{lam}): {c}<{i}" for a, lam, c, i in rows if c < i]
    detail = (f"kepler count {kepler}, lambda=inf counts {growth}, "
              + ("all counts >= i(alpha,lambda)" if bound else "below bound " + ", ".join(short)))
    return bound and kepler >= 1 and grows, detail


def criterion_6(seq, events):
    recs = seq.records
    conv = all(r.converged and r.residual_h1dual <= 1e-8 for r in recs)
    actions = [r.action.total for r in recs]
    bounded = max(actions) <= seq.action_bound
    series = seq.separations[(0, 1)]
    decay = series[0][1] / series[-1][1]
    binary = [e for e in events if e.kind == "binary"]
    one = len(events) == 1 and len(binary) == 1 and binary[0].isolated
    tail = recs[-seq.tail:]
    bound = verify_index_bound(seq, events)
    idx_ok = all(r.morse_index >= bound["lhs"] for r in tail) and bound["lhs"] == 1
    ok = conv and bounded and decay >= 5 and one and idx_ok and bound["holds"]
    return ok, (f"max residual {max(r.residual_h1dual for r in recs):.1e}, delta decay {decay:.0f}x, "
                f"{len(binary)} binary event, tail indices {[r.morse_index for r in tail]}, "
                f"bound {bound['lhs']} <= {bound['rhs']}")


def criterion_7(seq, events):
    ev = events[0]
    ang = direction_angle(collision_direction(seq, ev, "before"),
                          collision_direction(seq, ev, "after"))
    return ev.lambda_fit == 0.0 and ang <= 1e-2, f"lambda fit {ev.lambda_fit}, angle {ang:.2e} rad"


def criterion_8():
    rng = np.random.default_rng(8)
    sys = MassSystem(3, (1.0, 1.0, 1.0), 1.0)
    t0 = time.time()
    bad, min_sep, n_conv = [], math.inf, 0
    for k in range(20):
        qa = project_center_of_mass(sys, rng.standard_normal((3, 3)))
        qb = project_center_of_mass(sys, rng.standard_normal((3, 3)))
        p = make_path(sys, qa, qb, times=uniform_times(0, 10, 64))
        w = np.sin(np.pi * p.times / 10)[:, None, None]
        nodes = p.nodes + w * project_center_of_mass(sys, rng.standard_normal((3, 3))) * 0.5
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            r = minimize(sys, DiscretePath(sys, p.times, nodes), 0.0)
        if not r.converged:
            continue
        n_conv += 1
        sep = min(min_pair_separation(r.path, i, j).delta for i, j in ((0, 1), (0, 2), (1, 2)))
        min_sep = min(min_sep, sep)
        if sep <= 0 or r.morse_index != 0:
            bad.append(k)
    elapsed = time.time() - t0
    ok = n_conv > 0 and not bad and elapsed < 300
    return ok, f"{n_conv}/20 converged, min separation {min_sep:.2f}, index 0 on all, {elapsed:.1f}s"


def criterion_9(seq, events):
    a = audit_generalized_solution(seq, events)
    modulus = max(c["modulus"] for c in a["continuity"])
    return a["passed"], (f"(i) {a['i_finite_events']}, (ii) EL {a['el_residual_max']:.1e}, "
                         f"(iii) drift {a['energy_drift_rel']:.1e}, (iv) modulus {modulus:.1e}")


def criterion_10(seq, events):
    out = restricted_quadform_convergence(seq, events[0], bump(2.0), records=range(4, 8))
    rel = out["rel_diff"]
    return rel[-1] <= 0.05, "rel diff " + ", ".join(f"{x:.3f}" for x in rel)


# -- pytest wrappers -------------------------------------------------------------------

@pytest.mark.parametrize("n,body", [(1, criterion_1), (2, criterion_2), (3, criterion_3),
                                    (4, criterion_4), (5, criterion_5), (8, criterion_8)])
def test_standalone_criterion(capsys, n, body):
    ok, detail = body()
    assert report(capsys, n, ok, detail), detail


@pytest.mark.parametrize("n,body", [(6, criterion_6), (7, criterion_7), (9, criterion_9),
                                    (10, criterion_10)])
def test_flagship_criterion(capsys, flagship, flagship_events, n, body):
    ok, detail = body(flagship, flagship_events)
    assert report(capsys, n, ok, detail), detail


if __name__ == "__main__":
    import sys
    from pathlib import Path
    sys.path.insert(0, str(Path(__file__).parent))
    from conftest import L_SEP, flagship_config

    from weakmorse import continuation
    from weakmorse.collision import detect_collisions

    results = {}
    for n, body in ((1, criterion_1), (2, criterion_2), (3, criterion_3), (4, criterion_4),
                    (5, criterion_5), (8, criterion_8)):
        results[n] = report(None, n, *body())
    system = MassSystem(3, (1.0, 1.0), 1.0)
    q = np.array([[-L_SEP / 2, 0.0, 0.0], [L_SEP / 2, 0.0, 0.0]])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        seq = continuation(system, q, q, [4.0 ** -k for k in range(1, 9)], **flagship_config())
    events = detect_collisions(seq)
    for n, body in ((6, criterion_6), (7, criterion_7), (9, criterion_9), (10, criterion_10)):
        results[n] = report(None, n, *body(seq, events))
    sys.exit(0 if all(results.values()) else 1)
