"""Collisions of limit paths: detection, blow-ups and the regularity audit.

A collision is a sequence property. A pair collides when its closest
approach ``delta_n`` keeps shrinking along the eps schedule. Pairs that
collide at the same time and share a body are merged into one cluster.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import DISTANCE_FLOOR
from .action import action_gradient, action_hessian_form, kinetic_energy_segments
from .core import ClusterIndex, MassSystem, batch_potential_parts
from .critical import WeakCriticalSequence, fit_lambda
from .exceptions import (CaseMismatch, CollisionConfiguration, InsufficientData,
                         SupportTooWide, WindowEmpty, WindowOutOfDomain)
from .path import DiscretePath, eval_at, min_pair_separation, node_weights


@dataclass(frozen=True)
class ThresholdRule:
    """When a shrinking closest approach counts as a collision.

    ``min_decay``: total factor by which delta must shrink over the schedule.
    ``min_slope``: least-squares slope of log delta against log eps over the
    tail, which must be positive.
    """

    min_decay: float = 5.0
    min_slope: float = 0.1
    tail: int = 4
    lambda_growth: float = 10.0


@dataclass
class CollisionEvent:
    cluster: ClusterIndex
    time: float
    kind: str
    isolated: bool
    delta_series: list               # [(eps_n, delta_n, t_n)] per colliding pair
    lambda_fit: float
    pairs: tuple = ()
    lambda_info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"cluster": list(self.cluster.members), "time": self.time, "kind": self.kind,
                "isolated": self.isolated, "pairs": [list(p) for p in self.pairs],
                "delta_series": [list(x) for x in self.delta_series],
                "lambda_fit": self.lambda_fit, "lambda_info": self.lambda_info}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _cell_width(path: DiscretePath, t: float) -> float:
    k = int(np.clip(np.searchsorted(path.times, t) - 1, 0, path.M - 2))
    return float(path.h[max(k - 1, 0): k + 2].max())


def _series(seq, pair):
    if pair in seq.separations and len(seq.separations[pair]) == len(seq.records):
        return list(seq.separations[pair])
    return [(r.eps, *min_pair_separation(r.path, *pair)) for r in seq.records]


def _decays(series, rule):
    eps = np.array([s[0] for s in series])
    dl = np.array([s[1] for s in series])
    if dl[0] / dl[-1] < rule.min_decay:
        return False
    k = min(rule.tail, len(dl))
    slope = np.polyfit(np.log(eps[-k:]), np.log(dl[-k:]), 1)[0]
    return bool(slope > rule.min_slope and np.all(np.diff(dl[-k:]) < 0))


def detect_collisions(seq: WeakCriticalSequence, threshold_rule: ThresholdRule | None = None,
                      isolation_window: float | None = None) -> list:
    """Collision events of the limit path, sorted by time."""
    rule = threshold_rule or ThresholdRule()
    if len(seq.records) < 3:
        raise InsufficientData("collision detection needs at least 3 records")
    sys = seq.system
    path = seq.limit_path
    hits = []
    for i, j in zip(*sys.pairs()):
        pair = (int(i), int(j))
        series = _series(seq, pair)
        if _decays(series, rule):
            hits.append((pair, series))
    # union of pairs that share a body and collide within one grid cell
    parent = list(range(len(hits)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(len(hits)):
        for b in range(a + 1, len(hits)):
            (pa, sa), (pb, sb) = hits[a], hits[b]
            ta, tb = sa[-1][2], sb[-1][2]
            if set(pa) & set(pb) and abs(ta - tb) <= _cell_width(path, ta):
                parent[find(a)] = find(b)
    groups = {}
    for a in range(len(hits)):
        groups.setdefault(find(a), []).append(hits[a])
    events = []
    for members in groups.values():
        bodies = sorted({b for p, _ in members for b in p})
        pair0, series0 = min(members, key=lambda m: m[1][-1][1])
        lam = fit_lambda([s[0] for s in series0], [s[1] for s in series0], sys.alpha,
                         rule.tail, rule.lambda_growth)
        events.append(CollisionEvent(
            ClusterIndex(bodies), float(series0[-1][2]),
            "binary" if len(bodies) == 2 else "higher", False,
            [tuple(x) for x in series0], lam["lambda"], tuple(p for p, _ in members), lam))
    events.sort(key=lambda e: e.time)
    span = path.t2 - path.t1
    a = isolation_window if isolation_window is not None else 0.01 * span
    for ev in events:
        a_ev = min(a, 0.999 * (ev.time - path.t1), 0.999 * (path.t2 - ev.time))
        try:
            ev.isolated = isolation_check(seq, ev, a_ev, events)
        except WindowOutOfDomain:
            ev.isolated = False
    return events


def isolation_check(seq: WeakCriticalSequence, event: CollisionEvent, a: float,
                    events=None, floor: float | None = None) -> bool:
    """Whether the cluster is isolated on ``[t0 - a, t0 + a]`` of the limit path.

    Members must stay farther than ``floor`` from every other body on the
    window, and from each other outside the collision cell. No other event
    involving a member may fall inside the window.
    """
    path = seq.limit_path
    t0 = event.time
    if not (path.t1 < t0 - a and t0 + a < path.t2) or a <= 0:
        raise WindowOutOfDomain(f"window [{t0 - a}, {t0 + a}] not inside ({path.t1}, {path.t2})")
    members = set(event.cluster.members)
    for other in events or ():
        if other is event:
            continue
        if set(other.cluster.members) & members and abs(other.time - t0) <= a:
            return False
    delta = event.delta_series[-1][1]
    floor = 10.0 * delta if floor is None else floor
    sys = path.system
    cell = _cell_width(path, t0)
    for i in members:
        for j in range(sys.N):
            if j == i:
                continue
            p = (min(i, j), max(i, j))
            if j in members:
                for w in ((t0 - a, t0 - cell), (t0 + cell, t0 + a)):
                    if w[1] > w[0] and min_pair_separation(path, *p, w).delta <= DISTANCE_FLOOR:
                        return False
            elif min_pair_separation(path, *p, (t0 - a, t0 + a)).delta <= floor:
                return False
    return True


# -- energies ----------------------------------------------------------------------

def cluster_energy_parts(sys: MassSystem, path: DiscretePath, cluster, eps: float = 0.0,
                         floor: float = DISTANCE_FLOOR):
    """``(K_I, U_I, V_I)`` on segment midpoints for the bodies in ``cluster``."""
    members = np.array(ClusterIndex(tuple(cluster)).validate(sys.N).members)
    v = path.velocities()
    K = 0.5 * np.einsum("i,kid,kid->k", sys.m[members], v[:, members], v[:, members])
    Q = path.midpoints()
    if len(members) < 2:
        z = np.zeros(len(Q))
        return K, z, z
    sub = MassSystem(sys.d, tuple(sys.m[members]), sys.alpha)
    U, V = batch_potential_parts(sub, Q[:, members], floor)
    return K, U, V


def cluster_energy_series(sys: MassSystem, path: DiscretePath, cluster, eps: float = 0.0,
                          floor: float = DISTANCE_FLOOR) -> np.ndarray:
    """``E_I = K_I - U_I - eps V_I`` on the segment midpoints."""
    K, U, V = cluster_energy_parts(sys, path, cluster, eps, floor)
    return K - U - eps * V


def _windows(events, a):
    return [(e.time - a, e.time + a) for e in events]


def _outside(t, windows):
    mask = np.ones(len(t), bool)
    for lo, hi in windows:
        mask &= ~((t >= lo) & (t <= hi))
    return mask


def el_residual(sys: MassSystem, path: DiscretePath, eps: float = 0.0) -> np.ndarray:
    """Relative pointwise residual of the equations of motion at interior nodes.

    The discrete first variation divided by the node weight approximates
    ``-(m q'' - grad U)``; it is scaled by ``|m q''| + |grad U|`` per node.
    """
    G = action_gradient(sys, path, eps).values[1:-1]
    w = node_weights(path.times)[1:-1]
    force = np.linalg.norm(G, axis=(1, 2)) / w
    m = sys.m[None, :, None]
    v = path.velocities()
    acc = m * (v[1:] - v[:-1]) / w[:, None, None]
    from .core import batch_gradient
    gU = batch_gradient(sys, path.nodes[1:-1], eps)
    scale = np.linalg.norm(acc, axis=(1, 2)) + np.linalg.norm(gU, axis=(1, 2))
    return force / np.maximum(scale, 1e-300)


def audit_generalized_solution(seq: WeakCriticalSequence, events=None, window: float | None = None,
                               el_tol: float = 1e-4, drift_tol: float = 1e-6,
                               continuity_tol: float = 1e-3, max_window_fraction: float = 0.2,
                               eps: float = 0.0) -> dict:
    """Proxies for the four generalized-solution conditions on the limit path.

    (i) finitely many events whose windows cover a small part of the
    interval; (ii) equations of motion off the windows (with ``eps``,
    default 0, i.e. the weak-force problem); (iii) total-energy drift off
    the windows; (iv) cluster energy of each event equal on both window
    edges. ``window`` is the half-width around each event (default 5% of
    the interval).
    """
    path = seq.limit_path
    sys = path.system
    if events is None:
        events = detect_collisions(seq) if len(seq.records) >= 3 else []
    span = path.t2 - path.t1
    a = 0.05 * span if window is None else float(window)
    wins = _windows(events, a)
    covered = sum(min(hi, path.t2) - max(lo, path.t1) for lo, hi in wins)
    cond_i = bool(len(events) < path.M // 4 and covered <= max_window_fraction * span)

    res = el_residual(sys, path, eps)
    node_mask = _outside(path.times[1:-1], wins)
    el_max = float(res[node_mask].max()) if node_mask.any() else float("nan")
    cond_ii = bool(node_mask.any() and el_max <= el_tol)

    last_eps = seq.records[-1].eps if seq.records else 0.0
    tm = 0.5 * (path.times[1:] + path.times[:-1])
    E = cluster_energy_series(sys, path, range(sys.N), last_eps)
    seg_mask = _outside(tm, wins)
    Eo = E[seg_mask]
    drift = float(np.ptp(Eo) / max(abs(np.mean(Eo)), 1e-300)) if Eo.size else float("nan")
    cond_iii = bool(Eo.size and drift <= drift_tol)

    continuity = []
    for ev, (lo, hi) in zip(events, wins):
        EI = cluster_energy_series(sys, path, ev.cluster.members, last_eps)
        kl = int(np.argmin(np.abs(tm - lo)))
        kr = int(np.argmin(np.abs(tm - hi)))
        K, U, _ = cluster_energy_parts(sys, path, ev.cluster.members, last_eps)
        inside = (tm > lo) & (tm < hi)
        continuity.append({
            "event_time": ev.time,
            "left": float(EI[kl]), "right": float(EI[kr]),
            "modulus": float(abs(EI[kr] - EI[kl]) / max(abs(EI[kl]), abs(EI[kr]), 1e-300)),
            "max_kinetic_inside": float(K[inside].max()) if inside.any() else float("nan"),
            "max_potential_inside": float(U[inside].max()) if inside.any() else float("nan"),
        })
    cond_iv = all(c["modulus"] <= continuity_tol for c in continuity)
    return {
        "i_finite_events": cond_i, "ii_equations_off_windows": cond_ii,
        "iii_energy_constant": cond_iii, "iv_cluster_energy_continuous": bool(cond_iv),
        "passed": bool(cond_i and cond_ii and cond_iii and cond_iv),
        "n_events": len(events), "window_half_width": a, "el_residual_max": el_max,
        "energy_drift_rel": drift, "continuity": continuity,
    }


# -- pair frame ----------------------------------------------------------------------

@dataclass
class PairFrame:
    """Path in pair coordinates: ``eta[:, 0]`` relative, ``eta[:, 1]`` pair center."""

    times: np.ndarray
    eta: np.ndarray
    pair: tuple
    masses: np.ndarray

    def kinetic(self) -> np.ndarray:
        """Kinetic energy per segment written in the pair coordinates."""
        i, j = self.pair
        mi, mj = self.masses[i], self.masses[j]
        v = np.diff(self.eta, axis=0) / np.diff(self.times)[:, None, None]
        mu = np.array([mi * mj / (mi + mj), mi + mj] +
                      [self.masses[k] for k in range(len(self.masses)) if k not in (i, j)])
        return 0.5 * np.einsum("i,kid,kid->k", mu, v, v)


def _others(N, pair):
    return [k for k in range(N) if k not in pair]


def pair_frame(sys: MassSystem, path: DiscretePath, pair) -> PairFrame:
    """``eta_1 = q_j - q_i``, ``eta_2 = (m_i q_i + m_j q_j)/(m_i + m_j)``, rest unchanged."""
    i, j = (int(pair[0]), int(pair[1]))
    if i == j or not (0 <= i < sys.N and 0 <= j < sys.N):
        raise ValueError(f"invalid pair {pair}")
    q = path.nodes
    mi, mj = sys.m[i], sys.m[j]
    eta = np.empty_like(q)
    eta[:, 0] = q[:, j] - q[:, i]
    eta[:, 1] = (mi * q[:, i] + mj * q[:, j]) / (mi + mj)
    eta[:, 2:] = q[:, _others(sys.N, (i, j))]
    return PairFrame(np.array(path.times), eta, (i, j), sys.m)


def pair_frame_inverse(sys: MassSystem, frame: PairFrame) -> DiscretePath:
    i, j = frame.pair
    mi, mj = sys.m[i], sys.m[j]
    eta = frame.eta
    q = np.empty_like(eta)
    q[:, i] = eta[:, 1] - mj / (mi + mj) * eta[:, 0]
    q[:, j] = eta[:, 1] + mi / (mi + mj) * eta[:, 0]
    q[:, _others(sys.N, (i, j))] = eta[:, 2:]
    return DiscretePath(sys, frame.times, q)


# -- blow-up ---------------------------------------------------------------------------

@dataclass
class BlowUpProfile:
    case: str
    lam: float
    samples: np.ndarray              # (K, 1 + d): s, xi
    source: dict
    pre_asymptotic: bool = False

    @property
    def s(self):
        return self.samples[:, 0]

    @property
    def xi(self):
        return self.samples[:, 1:]

    def to_csv(self) -> str:
        d = self.samples.shape[1] - 1
        head = "s,r," + ",".join(f"x{k + 1}" for k in range(d)) + "\n"
        r = np.linalg.norm(self.xi, axis=1)
        return head + "".join(",".join(repr(float(x)) for x in (row[0], rr, *row[1:])) + "\n"
                              for row, rr in zip(self.samples, r))

    def to_dict(self) -> dict:
        return {"case": self.case, "lambda": self.lam, "source": self.source,
                "pre_asymptotic": self.pre_asymptotic, "samples": self.samples.tolist()}


def _event_pair(event):
    if event.kind != "binary":
        raise ValueError("blow-ups are implemented for binary events")
    return tuple(event.cluster.members)


def _time_scale(case, alpha, eps, delta):
    if case == "finite_lambda":
        return delta ** (1.0 + alpha / 2.0)
    return delta ** 2 / math.sqrt(eps)


def blow_up(seq: WeakCriticalSequence, event: CollisionEvent, n: int, case: str | None = None,
            a: float | None = None, s_cap: float = 1e6) -> BlowUpProfile:
    """Rescaled relative position around the n-th record's closest approach.

    Finite lambda: ``xi(s) = eta(delta^(1+alpha/2) s + t_n) / delta``.
    Infinite lambda: ``t(s) = eps^(-1/2) delta^2 s + t_n``. Samples are the
    record's nodes inside ``|t - t_n| <= a`` plus ``s = 0``.
    """
    fitted = "infinite_lambda" if math.isinf(event.lambda_fit) else "finite_lambda"
    if case is None:
        case = fitted
    elif case != fitted:
        raise CaseMismatch(f"requested {case} but the event was classified {fitted}")
    i, j = _event_pair(event)
    rec = seq.records[n]
    path = rec.path
    sys = path.system
    sep = min_pair_separation(path, i, j)
    delta, t_n = sep.delta, sep.t_star
    tau = _time_scale(case, sys.alpha, rec.eps, delta)
    span = path.t2 - path.t1
    a = 0.05 * span if a is None else a
    S = min(a / tau, s_cap)
    lo, hi = max(path.t1, t_n - S * tau), min(path.t2, t_n + S * tau)
    keep = (path.times >= lo) & (path.times <= hi)
    t = np.unique(np.concatenate([path.times[keep], [t_n]]))
    q = eval_at(path, t)
    eta = q[:, j] - q[:, i]
    s = (t - t_n) / tau
    samples = np.column_stack([s, eta / delta])
    outer = float(np.max(np.linalg.norm(path.nodes[:, j] - path.nodes[:, i], axis=1)))
    pre = bool(delta > 0.1 * outer)
    src = {"n": int(n), "eps": rec.eps, "delta": delta, "t_n": t_n, "time_scale": tau, "S": S}
    return BlowUpProfile(case, event.lambda_fit, samples, src, pre)


# -- directions ------------------------------------------------------------------------

def _unit(v):
    return v / np.linalg.norm(v)


def direction_samples(path: DiscretePath, pair, t_n, side, r_lo, r_hi):
    """Unit relative positions at nodes on one side whose radius is in ``[r_lo, r_hi]``."""
    i, j = pair
    eta = path.nodes[:, j] - path.nodes[:, i]
    r = np.linalg.norm(eta, axis=1)
    sel = path.times < t_n if side == "before" else path.times > t_n
    # only the monotone branch adjacent to the collision
    idx = np.where(sel)[0]
    idx = idx[::-1] if side == "before" else idx
    out = []
    for k in idx:
        if r[k] > r_hi:
            break
        if r[k] >= r_lo:
            out.append(k)
    return np.array(sorted(out), dtype=int), eta, r


def collision_direction(seq: WeakCriticalSequence, event: CollisionEvent, side: str,
                        l_lo: float = 10.0, r_hi: float | None = None, n: int | None = None,
                        return_diagnostics: bool = False):
    """Asymptotic collision direction ``u^-`` (before) or ``u^+`` (after).

    On the annulus ``l_lo * delta <= |eta| <= r_hi`` of record ``n`` (the
    limit path by default) the unit relative positions behave like
    ``u + c * sqrt(delta / r)`` (the near-parabolic deflection) plus a slow
    drift from the outer motion. The estimate is the intercept of a linear
    fit in ``sqrt(delta/r)`` and ``r/r_hi``; the spread of the raw
    directions over the annulus is reported as a diagnostic.
    """
    if side not in ("before", "after"):
        raise ValueError("side must be 'before' or 'after'")
    i, j = _event_pair(event)
    rec = seq.records[-1 if n is None else n]
    path = rec.path
    sep = min_pair_separation(path, i, j)
    delta = sep.delta
    if r_hi is None:
        eta = path.nodes[:, j] - path.nodes[:, i]
        r_hi = 0.1 * float(np.linalg.norm(eta, axis=1).max())
    idx, eta, r = direction_samples(path, (i, j), sep.t_star, side, l_lo * delta, r_hi)
    if len(idx) < 4:
        raise WindowEmpty(f"only {len(idx)} nodes in the annulus [{l_lo * delta:.3g}, {r_hi:.3g}]")
    U = eta[idx] / r[idx, None]
    x1 = np.sqrt(delta / r[idx])
    x2 = r[idx] / r_hi
    A = np.column_stack([np.ones(len(idx)), x1, x2])
    coef, *_ = np.linalg.lstsq(A, U, rcond=None)
    u = _unit(coef[0])
    mean = _unit(U.mean(axis=0))
    spread = float(np.max(np.arccos(np.clip(U @ mean, -1, 1))))
    if return_diagnostics:
        return u, {"n_samples": int(len(idx)), "spread": spread, "raw_mean": mean.tolist(),
                   "r_lo": l_lo * delta, "r_hi": r_hi, "delta": delta}
    return u


def direction_angle(u, v) -> float:
    return float(np.arccos(np.clip(np.dot(_unit(u), _unit(v)), -1.0, 1.0)))


# -- rescaled second variation -----------------------------------------------------

def bump(width: float = 2.0):
    """Compactly supported C^2 profile ``(1 - (s/w)^2)^3`` with its derivative."""
    w = float(width)

    def phi(s):
        s = np.asarray(s, dtype=float)
        x = np.clip(1.0 - (s / w) ** 2, 0.0, None)
        return x ** 3

    def dphi(s):
        s = np.asarray(s, dtype=float)
        x = np.clip(1.0 - (s / w) ** 2, 0.0, None)
        return -6.0 * s / w ** 2 * x ** 2

    phi.support = w
    phi.derivative = dphi
    return phi


def transverse_direction(path: DiscretePath, pair, t_n) -> np.ndarray:
    """A unit vector normal to the local orbit plane of the pair at ``t_n``."""
    i, j = pair
    k = int(np.clip(np.searchsorted(path.times, t_n), 1, path.M - 1))
    eta = path.nodes[:, j] - path.nodes[:, i]
    a, b = eta[k - 1], eta[k]
    d = path.system.d
    frame = np.column_stack([_unit(a), _unit(b - (b @ _unit(a)) * _unit(a))])
    for e in np.eye(d):
        v = e - frame @ (frame.T @ e)
        if np.linalg.norm(v) > 1e-6:
            return _unit(v)
    raise ValueError("could not find a transverse direction")


def restricted_quadform_convergence(seq: WeakCriticalSequence, event: CollisionEvent, phi,
                                    direction=None, records=None, limit_value=None) -> dict:
    """Rescaled pair-restricted second variations against the limit form.

    For record ``n`` the variation moves only the relative coordinate of
    the pair, ``f(t) = delta_n phi(s(t)) e`` with ``s`` the blow-up time;
    the value ``delta_n^(-(2-alpha)/2) d^2 A[f, f]`` is compared with
    ``m_i m_j d^2 I(xi)[phi e, phi e]`` for the limit orbit of the fitted
    lambda.
    """
    from .limitprob import integrate_limit_orbit, limit_transverse_form
    if math.isinf(event.lambda_fit):
        raise CaseMismatch("the rescaled form needs a finite-lambda event")
    i, j = _event_pair(event)
    support = float(getattr(phi, "support"))
    dphi = getattr(phi, "derivative")
    sys = seq.system
    mi, mj = sys.m[i], sys.m[j]
    Msum = mi + mj
    alpha = sys.alpha
    idx = range(len(seq.records)) if records is None else records
    values, ns = [], []
    for n in idx:
        rec = seq.records[n]
        path = rec.path
        sep = min_pair_separation(path, i, j)
        tau = sep.delta ** (1.0 + alpha / 2.0)
        if sep.t_star - support * tau <= path.t1 or sep.t_star + support * tau >= path.t2:
            raise SupportTooWide(f"phi support exceeds the time interval at record {n}")
        e = transverse_direction(path, (i, j), sep.t_star) if direction is None else _unit(
            np.asarray(direction, dtype=float))
        s = (path.times - sep.t_star) / tau
        f = sep.delta * phi(s)[:, None] * e
        u = np.zeros_like(path.nodes)
        u[:, i] = -mj / Msum * f
        u[:, j] = mi / Msum * f
        u[0] = u[-1] = 0.0
        val = action_hessian_form(sys, path, rec.eps, u, u)
        values.append(val * sep.delta ** (-(2.0 - alpha) / 2.0))
        ns.append(int(n))
    lam = event.lambda_fit
    if limit_value is None:
        orbit = integrate_limit_orbit(alpha, lam, Msum, s_max=support * 1.01, d=2)
        limit_value = mi * mj * limit_transverse_form(orbit, phi, dphi, support)
    rel = [abs(v - limit_value) / abs(limit_value) for v in values]
    return {"records": ns, "values": values, "limit": float(limit_value), "rel_diff": rel}
