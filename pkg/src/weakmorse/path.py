"""Discrete fixed-ends paths with centered nodes.

A path is a piecewise-linear interpolant through ``M`` node configurations
on a time grid ``t_0 = T1 < ... < t_{M-1} = T2``. The grid is uniform unless
a graded grid is requested explicitly (see :func:`graded_times`); graded
grids concentrate nodes near an expected collision time, which the uniform
grid cannot resolve once the pericenter distance is small.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize

from ._validation import check_configuration, check_nodes
from .core import MassSystem, is_centered, project_center_of_mass
from .exceptions import EndpointNotCentered, GridMismatch, OutOfDomain


def uniform_times(t1, t2, M):
    return np.linspace(float(t1), float(t2), int(M))


def graded_times(t1, t2, M, center, h_min):
    """Grid on ``[t1, t2]`` refined around ``center`` with spacing ``~h_min``.

    Uses the sinh stretching ``t = center + c*sinh(beta*(tau - tau0))`` of a
    uniform ``tau`` grid: spacing is ``h_min`` at ``center`` and grows
    geometrically away from it.
    """
    t1, t2, center, M = float(t1), float(t2), float(center), int(M)
    if not t1 < center < t2:
        raise OutOfDomain("grading center must lie strictly inside (t1, t2)")
    dtau = 1.0 / (M - 1)
    if h_min >= (t2 - t1) * dtau:
        return uniform_times(t1, t2, M)
    left, right = center - t1, t2 - center

    def solve(beta):
        # c*beta*dtau = h_min fixes c; tau0 from the left endpoint
        c = h_min / (beta * dtau)
        tau0 = np.arcsinh(left / c) / beta
        return c, tau0, c * np.sinh(beta * (1.0 - tau0)) - right

    hi = 1.0
    while solve(hi)[2] < 0:
        hi *= 2.0
    beta = optimize.brentq(lambda b: solve(b)[2], 1e-12, hi, xtol=1e-14, rtol=1e-15)
    c, tau0, _ = solve(beta)
    tau = np.linspace(0.0, 1.0, M)
    t = center + c * np.sinh(beta * (tau - tau0))
    t[0], t[-1] = t1, t2
    return t


@dataclass(frozen=True, eq=False)
class DiscretePath:
    """Fixed-ends path sampled at ``times``; nodes have shape (M, N, d)."""

    system: MassSystem
    times: np.ndarray
    nodes: np.ndarray
    endpoint_fixed: bool = True

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        nodes = check_nodes(self.system, np.array(self.nodes, dtype=float))
        if times.ndim != 1 or len(times) < 3:
            raise ValueError("a path needs at least M = 3 nodes")
        if len(times) != len(nodes):
            raise GridMismatch(f"{len(times)} times for {len(nodes)} nodes")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        times.setflags(write=False)
        nodes.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "nodes", nodes)

    @property
    def t1(self) -> float:
        return float(self.times[0])

    @property
    def t2(self) -> float:
        return float(self.times[-1])

    @property
    def M(self) -> int:
        return len(self.times)

    @property
    def h(self) -> np.ndarray:
        """Segment lengths, shape (M-1,)."""
        return np.diff(self.times)

    @property
    def is_uniform(self) -> bool:
        h = self.h
        return bool(np.allclose(h, h[0], rtol=1e-12, atol=0.0))

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    def with_interior(self, interior) -> "DiscretePath":
        nodes = np.array(self.nodes)
        nodes[1:-1] = interior
        return DiscretePath(self.system, self.times, nodes)

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    def velocities(self) -> np.ndarray:
        """Forward-difference (segment) velocities, shape (M-1, N, d)."""
        return np.diff(self.nodes, axis=0) / self.h[:, None, None]

    def to_dict(self) -> dict:
        out = {
            "t1": self.t1,
            "t2": self.t2,
            "M": self.M,
            "system": self.system.to_dict(),
            "nodes": self.nodes.tolist(),
        }
        if not self.is_uniform:
            out["times"] = self.times.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DiscretePath":
        sys = MassSystem.from_dict(data["system"])
        if "times" in data:
            times = np.asarray(data["times"], dtype=float)
        else:
            times = uniform_times(data["t1"], data["t2"], data["M"])
        return cls(sys, times, np.asarray(data["nodes"], dtype=float))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DiscretePath":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "body"] + [f"x{k + 1}" for k in range(self.system.d)])
        for t, q in zip(self.times, self.nodes):
            for i, x in enumerate(q):
                writer.writerow([repr(float(t)), i] + [repr(float(v)) for v in x])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class PathVariation:
    """Fixed-ends direction: zero at both endpoints, every entry centered."""

    values: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        times = np.asarray(self.times, dtype=float)
        if values.ndim != 3 or len(values) != len(times):
            raise GridMismatch("variation values must have shape (M, N, d) on its grid")
        if np.any(values[0] != 0.0) or np.any(values[-1] != 0.0):
            raise ValueError("a fixed-ends variation must vanish at both endpoints")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "times", times)

    @classmethod
    def from_interior(cls, interior, times):
        interior = np.asarray(interior, dtype=float)
        values = np.zeros((len(interior) + 2,) + interior.shape[1:])
        values[1:-1] = interior
        return cls(values, times)


def make_path(sys: MassSystem, qa, qb, M=None, init="linear", times=None,
              tol: float = 1e-12) -> DiscretePath:
    """Build a fixed-ends path between centered endpoints.

    ``init`` is ``"linear"`` or an array of node configurations (seeded).
    ``times`` overrides the uniform grid on ``[0, 1]``; pass it to choose
    ``[T1, T2]`` or a graded grid.
    """
    qa = check_configuration(sys, qa, "qa")
    qb = check_configuration(sys, qb, "qb")
    for name, q in (("qa", qa), ("qb", qb)):
        if not is_centered(sys, q, tol):
            raise EndpointNotCentered(f"endpoint {name} is not centered")
    if times is None:
        if M is None:
            raise ValueError("either M or times is required")
        times = uniform_times(0.0, 1.0, M)
    times = np.asarray(times, dtype=float)
    M = len(times)
    if M < 3:
        raise ValueError("M must be at least 3")
    if isinstance(init, str):
        if init != "linear":
            raise ValueError(f"unknown init {init!r}")
        w = ((times - times[0]) / (times[-1] - times[0]))[:, None, None]
        # convex combinations of centered endpoints stay centered; this form
        # also returns qa exactly when qa == qb
        nodes = qa + w * (qb - qa)
    else:
        nodes = check_nodes(sys, init, "seeded nodes")
        if len(nodes) != M:
            raise GridMismatch(f"seeded init has {len(nodes)} nodes, expected {M}")
        for k, q in enumerate(nodes):
            if not is_centered(sys, q, tol):
                raise EndpointNotCentered(f"seeded node {k} is not centered")
        nodes = np.array(nodes)
    nodes[0], nodes[-1] = qa, qb
    return DiscretePath(sys, times, nodes)


def eval_at(path: DiscretePath, t) -> np.ndarray:
    """Piecewise-linear interpolation of the path at time(s) ``t``."""
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    span = path.t2 - path.t1
    if np.any(t_arr < path.t1 - 1e-12 * span) or np.any(t_arr > path.t2 + 1e-12 * span):
        raise OutOfDomain(f"t outside [{path.t1}, {path.t2}]")
    t_arr = np.clip(t_arr, path.t1, path.t2)
    k = np.clip(np.searchsorted(path.times, t_arr, side="right") - 1, 0, path.M - 2)
    w = (t_arr - path.times[k]) / path.h[k]
    out = (1.0 - w)[:, None, None] * path.nodes[k] + w[:, None, None] * path.nodes[k + 1]
    exact = t_arr == path.times[k]
    out[exact] = path.nodes[k[exact]]
    return out[0] if scalar else out


def resample(path: DiscretePath, times) -> DiscretePath:
    """Interpolate ``path`` onto a new grid with the same endpoints."""
    times = np.asarray(times, dtype=float)
    if not (np.isclose(times[0], path.t1) and np.isclose(times[-1], path.t2)):
        raise GridMismatch("resampling must keep the time interval")
    nodes = eval_at(path, times)
    sys = path.system
    nodes = nodes - np.tensordot(nodes, sys.m, axes=(1, 0))[:, None, :] / sys.total_mass
    nodes[0], nodes[-1] = path.nodes[0], path.nodes[-1]
    return DiscretePath(sys, times, nodes)


def node_weights(times) -> np.ndarray:
    """Lumped L2 weights ``(h_{k-1} + h_k)/2`` per node (half-cells at the ends)."""
    h = np.diff(np.asarray(times, dtype=float))
    w = np.zeros(len(h) + 1)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def h1_inner(sys: MassSystem, u: PathVariation, v: PathVariation) -> float:
    """Mass-weighted discrete H1 inner product of two fixed-ends variations."""
    if u.values.shape != v.values.shape or not np.array_equal(u.times, v.times):
        raise GridMismatch("variations live on different grids")
    h = np.diff(u.times)
    m = sys.m[None, :, None]
    du = np.diff(u.values, axis=0) / h[:, None, None]
    dv = np.diff(v.values, axis=0) / h[:, None, None]
    kinetic = float(np.sum(h[:, None, None] * m * du * dv))
    w = node_weights(u.times)
    l2 = float(np.sum(w[:, None, None] * m * u.values * v.values))
    return kinetic + l2


def h1_gram_1d(times):
    """Scalar H1 Gram on interior nodes as banded storage (upper form).

    Returns ``ab`` of shape (2, M-2) for :func:`scipy.linalg.solveh_banded`
    and the dense matrix builder is :func:`banded_to_dense`.
    """
    h = np.diff(np.asarray(times, dtype=float))
    w = node_weights(times)[1:-1]
    diag = 1.0 / h[:-1] + 1.0 / h[1:] + w
    off = -1.0 / h[1:-1]
    ab = np.zeros((2, len(diag)))
    ab[1] = diag
    ab[0, 1:] = off
    return ab


def l2_gram_1d(times):
    """Lumped L2 Gram on interior nodes (diagonal)."""
    return node_weights(times)[1:-1]


def banded_to_dense(ab):
    n = ab.shape[1]
    A = np.diag(ab[1])
    A += np.diag(ab[0, 1:], 1) + np.diag(ab[0, 1:], -1)
    return A


class Separation(NamedTuple):
    delta: float
    t_star: float


def _segment_min(path, i, j, k):
    """Exact minimum of the interpolated pair distance on segment ``k``."""
    a = path.nodes[k, j] - path.nodes[k, i]
    b = path.nodes[k + 1, j] - path.nodes[k + 1, i]
    db = b - a
    den = float(db @ db)
    w = 0.0 if den == 0.0 else float(np.clip(-(a @ db) / den, 0.0, 1.0))
    return float(np.linalg.norm(a + w * db)), float(path.times[k] + w * path.h[k])


def min_pair_separation(path: DiscretePath, i: int, j: int, window=None) -> Separation:
    """Minimal distance between bodies ``i`` and ``j`` over a time window.

    Minimum over grid nodes inside the window (window edges included),
    refined by a parabola through the squared distances at the minimizing
    node and its neighbours. Ties go to the earliest time.
    """
    ta, tb = (path.t1, path.t2) if window is None else map(float, window)
    span = path.t2 - path.t1
    if ta < path.t1 - 1e-12 * span or tb > path.t2 + 1e-12 * span or ta > tb:
        raise OutOfDomain(f"window [{ta}, {tb}] not inside [{path.t1}, {path.t2}]")
    ta, tb = max(ta, path.t1), min(tb, path.t2)
    inner = path.times[(path.times > ta) & (path.times < tb)]
    ts = np.concatenate([[ta], inner, [tb]]) if tb > ta else np.array([ta])
    q = eval_at(path, ts)
    d2 = np.sum((q[:, j] - q[:, i]) ** 2, axis=1)
    k = int(np.argmin(d2))
    delta, t_star = float(np.sqrt(d2[k])), float(ts[k])
    if 0 < k < len(ts) - 1:
        x0, x1, x2 = ts[k - 1: k + 2]
        y0, y1, y2 = d2[k - 1: k + 2]
        # vertex of the parabola through three (t, d^2) samples
        den = (x0 - x1) * (x0 - x2) * (x1 - x2)
        A = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den
        B = (x2 ** 2 * (y0 - y1) + x1 ** 2 * (y2 - y0) + x0 ** 2 * (y1 - y2)) / den
        C = (x1 * x2 * (x1 - x2) * y0 + x2 * x0 * (x2 - x0) * y1
             + x0 * x1 * (x0 - x1) * y2) / den
        if A > 0:
            tv = -B / (2 * A)
            yv = C - B * B / (4 * A)
            if x0 <= tv <= x2 and 0.0 < yv <= y1:
                return Separation(float(np.sqrt(yv)), float(tv))
    # degenerate parabola: exact piecewise-linear minimum on adjacent segments
    best = Separation(delta, t_star)
    for kk in np.searchsorted(path.times, [t_star], side="right") - 1 + np.array([-1, 0]):
        if 0 <= kk < path.M - 1:
            d, t = _segment_min(path, i, j, int(kk))
            if ta <= t <= tb and d < best.delta * (1 - 1e-14):
                best = Separation(d, t)
    return best
