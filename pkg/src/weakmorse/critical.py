"""Critical points of the discrete action and the eps -> 0 continuation.

All solvers work on a *functional* object exposing ``value``, ``grad``,
``hess`` (a :class:`~weakmorse.action.BandedHessian`), ``gram`` and
``decode``/``encode``. :class:`~weakmorse.action.ActionFunctional` is the
production implementation; :class:`DoubleWellFunctional` is a toy with a
known saddle used to validate the mountain-pass search.

Steps come from the generalized eigen-decomposition of ``(H, B)`` with
``B`` the H1 Gram, so they are H1-preconditioned and iteration counts do
not grow with the grid. Near-zero modes (residual symmetries such as a
rotation about the endpoint axis) are left out of every step.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator

from ._validation import check_eps, check_random_state
from .action import ActionFunctional, ActionValue, BandedHessian, action_value
from .core import MassSystem, center_basis
from .exceptions import (BoundViolated, CollisionConfiguration, ContinuationBroke,
                         Diverged, MaxIterations, StringCollapse, WeakMorseError)
from .path import (DiscretePath, graded_times, make_path, min_pair_separation,
                   resample, uniform_times)
from .spectral import DENSE_LIMIT, ZTOL_REL, spectral_report

log = logging.getLogger(__name__)


# -- records -----------------------------------------------------------------------

@dataclass(frozen=True)
class CriticalPointRecord:
    path: DiscretePath
    eps: float
    action: ActionValue
    residual_h1dual: float
    morse_index: int
    negative_eigenvalues: tuple
    converged: bool = True
    iterations: int = 0
    residual_history: tuple = ()
    zero_modes: int = 0
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "path": self.path.to_dict(),
            "eps": self.eps,
            "action": self.action._asdict(),
            "residual_h1dual": self.residual_h1dual,
            "morse_index": self.morse_index,
            "negative_eigenvalues": list(self.negative_eigenvalues),
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_history": list(self.residual_history),
            "zero_modes": self.zero_modes,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CriticalPointRecord":
        return cls(DiscretePath.from_dict(data["path"]), data["eps"],
                   ActionValue(**data["action"]), data["residual_h1dual"],
                   data["morse_index"], tuple(data["negative_eigenvalues"]),
                   data.get("converged", True), data.get("iterations", 0),
                   tuple(data.get("residual_history", ())), data.get("zero_modes", 0),
                   data.get("note", ""))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class WeakCriticalSequence:
    """Records along a decreasing eps schedule, with the limit diagnostics.

    ``index_liminf`` is the minimum Morse index over the recorded tail. It
    is an upper bound for the weak Morse index, which takes an infimum over
    every admissible sequence.
    """

    eps_schedule: tuple
    records: list
    limit_path: DiscretePath
    action_bound: float
    lambda_estimates: dict
    index_liminf: int
    separations: dict = field(default_factory=dict)
    sup_distances: tuple = ()
    tail: int = 4
    flags: dict = field(default_factory=dict)

    @property
    def system(self) -> MassSystem:
        return self.limit_path.system

    def summary(self) -> dict:
        return {
            "eps_schedule": list(self.eps_schedule),
            "action_bound": self.action_bound,
            "index_liminf": self.index_liminf,
            "index_label": "sequence index (upper bound of weak index)",
            "lambda_estimates": {f"{i}-{j}": list(v) for (i, j), v in self.lambda_estimates.items()},
            "separations": {f"{i}-{j}": [list(x) for x in v] for (i, j), v in self.separations.items()},
            "sup_distances": list(self.sup_distances),
            "records": [{"eps": r.eps, "action": r.action.total, "residual": r.residual_h1dual,
                         "morse_index": r.morse_index, "converged": r.converged}
                        for r in self.records],
            "flags": self.flags,
        }

    def to_dict(self) -> dict:
        """Full round-trippable form (records include their paths)."""
        out = self.summary()
        out["records"] = [r.to_dict() for r in self.records]
        out["tail"] = self.tail
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "WeakCriticalSequence":
        def pair(key):
            i, j = key.split("-")
            return int(i), int(j)
        records = [CriticalPointRecord.from_dict(r) for r in data["records"]]
        seps = {pair(k): [tuple(x) for x in v] for k, v in data.get("separations", {}).items()}
        lam = {pair(k): tuple(v) for k, v in data.get("lambda_estimates", {}).items()}
        return cls(tuple(data["eps_schedule"]), records,
                   records[-1].path if records else None, data["action_bound"], lam,
                   data["index_liminf"], seps, tuple(data.get("sup_distances", ())),
                   data.get("tail", 4), dict(data.get("flags", {})))


# -- linear algebra helpers ----------------------------------------------------------

def _pencil(F, y):
    """Generalized eigenpairs of (H, B) at ``y``; B-orthonormal vectors."""
    H = F.hess(y)
    mu, V = linalg.eigh(H.to_dense(), F.gram.to_dense())
    return mu, V, H


def _ztol(mu):
    return ZTOL_REL * max(float(np.max(np.abs(mu))), 1.0e-300)


def _newton_direction(F, y, g):
    """Newton step with the zero band filtered out; ``(step, mu)``."""
    if F.n <= DENSE_LIMIT:
        mu, V, _ = _pencil(F, y)
        keep = np.abs(mu) > _ztol(mu)
        c = V.T @ g
        return -(V[:, keep] @ (c[keep] / mu[keep])), mu
    H = F.hess(y)
    u = H.bandwidth
    full = np.vstack([H.ab, H.ab[:-1][::-1] * 0.0])
    # lower half of the general band storage from the symmetric upper band
    for k in range(1, u + 1):
        full[u + k, : H.n - k] = H.ab[u - k, k:]
    return -linalg.solve_banded((u, u), full, g), None


def _descent_direction(F, y, g, floor_rel=1e-6):
    """Eigenvalue-modified Newton step: curvature replaced by ``|mu|``."""
    if F.n <= DENSE_LIMIT:
        mu, V, _ = _pencil(F, y)
        scale = max(float(np.max(np.abs(mu))), 1e-300)
        w = np.maximum(np.abs(mu), floor_rel * scale)
        return -(V @ ((V.T @ g) / w)), mu
    H = F.hess(y)
    tau = 0.0
    B = F.gram
    for _ in range(60):
        try:
            A = BandedHessian(H.ab + tau * B.ab, H.block) if tau else H
            c = linalg.cholesky_banded(A.ab)
            return -linalg.cho_solve_banded((c, False), g), None
        except linalg.LinAlgError:
            tau = max(2.0 * tau, 1e-8 * float(np.abs(H.ab[-1]).max()))
    raise Diverged("could not make the Hessian positive definite")


def _safe_value(F, y):
    try:
        return F.value(y)
    except CollisionConfiguration:
        return np.inf


def _safe_grad(F, y):
    try:
        return F.grad(y)
    except CollisionConfiguration:
        return None


def _record(F, y, sys, history, converged, iterations, note="") -> CriticalPointRecord:
    path = F.decode(y)
    g = F.grad(y)
    res = F.dual_norm(g)
    H = F.hess(y)
    with warnings.catch_warnings():
        # zero modes are expected here (symmetries) and kept in the record
        warnings.simplefilter("ignore", UserWarning)
        rep = spectral_report(H, F.gram, path.M if hasattr(path, "M") else 0)
    neg = tuple(x for x in rep.eigenvalues_below_cutoff if x < -rep.ztol)
    act = (action_value(sys, path, F.eps) if isinstance(F, ActionFunctional)
           else ActionValue(F.value(y), 0.0, 0.0, 0.0, 0.0))
    return CriticalPointRecord(path, getattr(F, "eps", 0.0), act, res, rep.num_negative,
                               neg, converged, iterations, tuple(history),
                               len(rep.zero_band), note)


# -- solvers -----------------------------------------------------------------------

def _newton_loop(F, y, tol, max_iter, history):
    """Filtered Newton on the gradient with backtracking on the dual residual."""
    g = F.grad(y)
    r = F.dual_norm(g)
    history.append(r)
    it = 0
    while r > tol and it < max_iter:
        it += 1
        dy, _ = _newton_direction(F, y, g)
        s = 1.0
        while True:
            y_new = y + s * dy
            g_new = _safe_grad(F, y_new)
            if g_new is not None:
                r_new = F.dual_norm(g_new)
                if r_new < r or s < 1e-3 and np.isfinite(r_new) and r_new < 10 * r:
                    break
            s *= 0.5
            if s < 1e-10:
                raise Diverged(f"Newton line search failed at residual {r:.3e}")
        y, g, r = y_new, g_new, r_new
        history.append(r)
        log.debug("newton it=%d residual=%.3e step=%.3g", it, r, s)
    return y, r, it


def minimize(sys, path0, eps: float = 0.0, tol: float = 1e-8, max_iter: int = 200,
             functional=None, newton_switch: float = 1e-4) -> CriticalPointRecord:
    """Local minimizer of the action with the endpoints of ``path0`` fixed.

    Modified Newton with Armijo backtracking; a step that would bring two
    bodies into collision counts as infinite action and is shortened. The
    last iterations are plain Newton steps once the Hessian is positive.
    If ``max_iter`` runs out the best iterate is returned with
    ``converged=False``.
    """
    F = functional if functional is not None else ActionFunctional(sys, path0, check_eps(eps))
    y = F.encode(path0)
    f = F.value(y)
    g = F.grad(y)
    r = F.dual_norm(g)
    history = [r]
    it = 0
    while r > tol and it < max_iter:
        it += 1
        dy, mu = _descent_direction(F, y, g)
        slope = float(g @ dy)
        s = 1.0
        while True:
            f_new = _safe_value(F, y + s * dy)
            if f_new <= f + 1e-4 * s * slope:
                break
            s *= 0.5
            if s < 1e-14:
                break
        if s < 1e-14:
            # no further decrease possible at this precision
            if r <= 100 * tol or (mu is not None and np.all(mu > 0)):
                y, r, extra = _newton_loop(F, y, tol, 20, history)
                it += extra
            break
        y = y + s * dy
        f = f_new
        g = F.grad(y)
        r = F.dual_norm(g)
        history.append(r)
        log.debug("minimize it=%d f=%.12g residual=%.3e step=%.3g", it, f, r, s)
    rec = _record(F, y, sys, history, r <= tol, it)
    if not rec.converged:
        log.warning("minimize stopped at residual %.3e after %d iterations", r, it)
    return rec


def newton_refine(sys, record: CriticalPointRecord, tol: float = 1e-8, max_iter: int = 50,
                  functional=None) -> CriticalPointRecord:
    """Newton iterations from ``record``; the zero band is projected out.

    The residual history is kept on the record; near convergence the ratio
    ``r_{k+1} / r_k**2`` should stay bounded (quadratic convergence).
    """
    F = functional if functional is not None else ActionFunctional(sys, record.path, record.eps)
    y = F.encode(record.path)
    history = []
    y, r, it = _newton_loop(F, y, tol, max_iter, history)
    if it == 0:
        return replace(record, residual_history=tuple(history))
    if r > tol:
        raise MaxIterations(f"Newton stopped at residual {r:.3e} > {tol:.1e}")
    return _record(F, y, sys, history, True, it)


def quadratic_ratios(history) -> np.ndarray:
    """``r_{k+1} / r_k**2`` over a residual history."""
    r = np.asarray(history, dtype=float)
    if len(r) < 2:
        return np.zeros(0)
    return r[1:] / r[:-1] ** 2


# -- mountain pass -----------------------------------------------------------------

class DoubleWellFunctional:
    """Toy functional with two minima and one saddle on the path data structures.

    ``f(y) = (y[c]**2 - 1)**2 + 1/2 * sum_{i != c} w_i y_i**2`` in reduced
    interior coordinates: minima at ``y[c] = +-1``, saddle at ``y = 0`` with
    Morse index 1. ``c`` is one coordinate of one interior node.
    """

    def __init__(self, template: DiscretePath, node: int = 1, coord: int = 0):
        from .action import reduced_gram
        self.template = template
        self.sys = template.system
        self.eps = 0.0
        self.P = center_basis(self.sys)
        self.block = self.P.shape[1]
        self.gram = reduced_gram(template, self.block)
        self.c = (node - 1) * self.block + coord
        self.w = np.linspace(1.0, 2.0, self.n)
        self._origin = 0.0
        self._origin = ActionFunctional.encode(self, template)

    @property
    def n(self) -> int:
        return (self.template.M - 2) * self.block

    # coordinates are offsets from the template so decoded paths stay collision-free
    def encode(self, path):
        return ActionFunctional.encode(self, path) - self._origin

    def decode(self, y):
        return ActionFunctional.decode(self, np.asarray(y, dtype=float) + self._origin)

    def dual_norm(self, g):
        return ActionFunctional.dual_norm(self, g)

    def value(self, y):
        y = np.asarray(y, dtype=float)
        mask = np.ones(self.n, bool)
        mask[self.c] = False
        return float((y[self.c] ** 2 - 1.0) ** 2 + 0.5 * np.sum(self.w[mask] * y[mask] ** 2))

    def grad(self, y):
        y = np.asarray(y, dtype=float)
        g = self.w * y
        g[self.c] = 4.0 * y[self.c] * (y[self.c] ** 2 - 1.0)
        return g

    def hess(self, y):
        diag = self.w.copy()
        diag[self.c] = 12.0 * y[self.c] ** 2 - 4.0
        b = self.block
        ab = np.zeros((2 * b, self.n))
        ab[-1] = diag
        return BandedHessian(ab, b)

    def point(self, value: float) -> DiscretePath:
        y = np.zeros(self.n)
        y[self.c] = value
        return self.decode(y)


def _reparametrize(beads, B):
    """Equal B-arclength redistribution of a polyline of beads."""
    seg = np.array([np.sqrt(max((b1 - b0) @ B.matvec(b1 - b0), 0.0))
                    for b0, b1 in zip(beads[:-1], beads[1:])])
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0.0:
        raise StringCollapse("string has zero length")
    target = np.linspace(0.0, s[-1], len(beads))
    out = np.empty_like(beads)
    for j in range(beads.shape[1]):
        out[:, j] = np.interp(target, s, beads[:, j])
    out[0], out[-1] = beads[0], beads[-1]
    return out


def mountain_pass(sys, path_a, path_b, eps: float = 0.0, tol: float = 1e-8,
                  n_beads: int = 16, max_iter: int = 400, step: float = 0.2,
                  functional=None, seed=0, newton_switch: float = 1e-3) -> CriticalPointRecord:
    """Saddle between two critical points by a climbing-image string method.

    The string joins ``path_a`` and ``path_b``. Interior beads descend along
    the H1 gradient with its tangential part removed and are redistributed
    at equal H1 arclength after each sweep; the highest bead climbs along
    the tangent. The climbing bead is finally Newton-refined and its Morse
    index reported.
    """
    pa = path_a.path if isinstance(path_a, CriticalPointRecord) else path_a
    pb = path_b.path if isinstance(path_b, CriticalPointRecord) else path_b
    F = functional if functional is not None else ActionFunctional(sys, pa, check_eps(eps))
    ya, yb = F.encode(pa), F.encode(pb)
    B = F.gram
    gap = np.sqrt(max((yb - ya) @ B.matvec(yb - ya), 0.0))
    if gap <= 1e-10 * max(1.0, np.sqrt(ya @ B.matvec(ya))):
        raise StringCollapse("the two endpoints of the string coincide")
    rng = check_random_state(seed)
    tgrid = np.linspace(0.0, 1.0, n_beads)[:, None]
    beads = (1 - tgrid) * ya + tgrid * yb
    # small deterministic kick so a symmetric straight string can leave the ridge
    kick = rng.standard_normal(F.n) * 1e-3 * gap / np.sqrt(F.n)
    beads[1:-1] += np.sin(np.pi * tgrid[1:-1]) * kick
    Bfac = linalg.cholesky_banded(B.ab)

    def precond(g):
        return linalg.cho_solve_banded((Bfac, False), g)

    climber = None
    for it in range(max_iter):
        vals = np.array([_safe_value(F, b) for b in beads])
        if not np.all(np.isfinite(vals[1:-1])):
            bad = np.where(~np.isfinite(vals))[0]
            for k in bad:
                beads[k] = 0.5 * (beads[k - 1] + beads[min(k + 1, n_beads - 1)])
            continue
        climber = 1 + int(np.argmax(vals[1:-1]))
        worst = 0.0
        new = beads.copy()
        for k in range(1, n_beads - 1):
            tau = beads[k + 1] - beads[k - 1]
            tau /= np.sqrt(max(tau @ B.matvec(tau), 1e-300))
            d = precond(F.grad(beads[k]))
            par = (d @ B.matvec(tau)) * tau
            move = (d - 2.0 * par) if k == climber else (d - par)
            new[k] = beads[k] - step * move
            if k == climber:
                worst = np.sqrt(max(move @ B.matvec(move), 0.0))
        beads = _reparametrize(new, B)
        beads[climber] = new[climber]
        if worst < newton_switch:
            break
    y = beads[climber]
    history = []
    try:
        y, r, extra = _newton_loop(F, y, tol, 60, history)
    except Diverged as exc:
        raise MaxIterations(f"saddle refinement failed: {exc}") from exc
    if r > tol:
        raise MaxIterations(f"saddle refinement stopped at residual {r:.3e}")
    gap_a = np.sqrt(max((y - ya) @ B.matvec(y - ya), 0.0))
    gap_b = np.sqrt(max((y - yb) @ B.matvec(y - yb), 0.0))
    note = "refined onto an endpoint" if min(gap_a, gap_b) < 1e-6 * gap else ""
    return _record(F, y, sys if functional is None else None, history, True, it + extra, note)


# -- continuation ------------------------------------------------------------------

def sup_distance(p: DiscretePath, q: DiscretePath) -> float:
    """Sup-norm distance between two paths (q resampled onto p's grid)."""
    if p.M != q.M or not np.array_equal(p.times, q.times):
        q = resample(q, p.times)
    return float(np.max(np.linalg.norm(p.nodes - q.nodes, axis=-1)))


def fit_lambda(eps, delta, alpha, k: int = 4, growth: float = 10.0) -> dict:
    """Classify ``lambda = lim eps_n / delta_n**(2-alpha)`` from the sequence tail.

    Fits ``log eps = s * (2-alpha) log delta + c`` on the last ``k`` points.
    ``s > 1`` means the ratio tends to 0; growth of the ratio by more than
    ``growth`` over the tail is classified as infinite.
    """
    eps = np.asarray(eps, float)[-k:]
    delta = np.asarray(delta, float)[-k:]
    ratio = eps / delta ** (2.0 - alpha)
    out = {"ratios": ratio.tolist(), "slope": float("nan"), "lambda": float("nan"),
           "case": "undetermined"}
    if len(eps) < 2:
        return out
    x = (2.0 - alpha) * np.log(delta)
    slope = float(np.polyfit(x, np.log(eps), 1)[0])
    out["slope"] = slope
    if ratio[-1] > growth * ratio[0]:
        out.update(case="infinite_lambda", **{"lambda": float("inf")})
    elif slope > 1.0 and ratio[-1] < ratio[0]:
        out.update(case="finite_lambda", **{"lambda": 0.0})
    else:
        out.update(case="finite_lambda", **{"lambda": float(np.mean(ratio))})
    return out


def _closest_pair(path):
    sys = path.system
    I, J = sys.pairs()
    best = None
    for i, j in zip(I, J):
        s = min_pair_separation(path, int(i), int(j))
        if best is None or s.delta < best[0].delta:
            best = (s, (int(i), int(j)))
    return best


def regraded_times(sys, t1, t2, M, t_center, delta, kappa: float = 0.05):
    """Grid refined around a predicted near-collision time.

    The spacing at the center is ``kappa * delta**(1 + alpha/2)``, the
    natural time scale of a pericenter passage at distance ``delta``.
    """
    h_min = kappa * delta ** (1.0 + sys.alpha / 2.0)
    margin = 1e-3 * (t2 - t1)
    t_center = min(max(t_center, t1 + margin), t2 - margin)
    return graded_times(t1, t2, M, t_center, h_min)


def continuation(sys, qa, qb, eps_schedule, tol: float = 1e-8, seed_strategy="linear",
                 M: int = 64, t1: float = 0.0, t2: float = 1.0, grid: str = "uniform",
                 kappa: float = 0.05, seed=0, pairs=None, action_bound=None,
                 eps_min: float = 1e-8, tail: int = 4, max_iter: int = 60,
                 spectral: bool = True, max_substeps: int = 4) -> WeakCriticalSequence:
    """Critical points along a decreasing eps schedule, each warm-started.

    ``seed_strategy`` is ``"linear"`` (straight path plus a seeded small
    transverse offset), ``"minimize"`` (descend first), a node array or a
    callable ``(sys, times, rng) -> nodes``. With ``grid="graded"`` every
    record gets a grid refined around the predicted closest approach of
    the previous records. A failed solve is retried after solving at
    intermediate eps values (not recorded), up to ``max_substeps`` levels.
    """
    eps_schedule = tuple(float(e) for e in eps_schedule)
    if not eps_schedule:
        raise ValueError("empty eps schedule")
    if any(b >= a for a, b in zip(eps_schedule, eps_schedule[1:])):
        raise ValueError("eps schedule must be strictly decreasing")
    if eps_schedule[-1] < eps_min:
        raise ValueError(f"eps below the floor eps_min={eps_min}")
    rng = check_random_state(seed)
    times = uniform_times(t1, t2, M)
    path = _seed_path(sys, qa, qb, times, seed_strategy, rng)
    if isinstance(seed_strategy, str) and seed_strategy == "minimize":
        path = minimize(sys, path, eps_schedule[0], tol=max(tol, 1e-6)).path
    pairs = [tuple(p) for p in pairs] if pairs is not None else \
        [(int(i), int(j)) for i, j in zip(*sys.pairs())]
    records, seps = [], {p: [] for p in pairs}
    deltas = []
    for n, eps in enumerate(eps_schedule):
        if grid == "graded" and records:
            sep, _ = _closest_pair(records[-1].path)
            deltas.append(sep.delta)
            d_pred = deltas[-1] if len(deltas) < 2 else deltas[-1] ** 2 / deltas[-2]
            d_pred = min(d_pred, deltas[-1])
            path = resample(records[-1].path,
                            regraded_times(sys, t1, t2, M, sep.t_star, d_pred, kappa))
        elif records:
            path = records[-1].path
        try:
            prev_eps = eps_schedule[n - 1] if n else None
            F, y, history, it = _solve_with_substeps(sys, path, eps, prev_eps, tol, max_iter,
                                                     max_substeps)
            rec = _record(F, y, sys, history, True, it) if spectral else \
                _cheap_record(F, y, sys, history, it)
        except (WeakMorseError, linalg.LinAlgError) as exc:
            partial = _assemble(eps_schedule[:n], records, seps, sys, tail, action_bound)
            raise ContinuationBroke(f"solve failed at eps={eps:.3e}: {exc}", partial) from exc
        records.append(rec)
        for p in pairs:
            s = min_pair_separation(rec.path, *p)
            seps[p].append((eps, s.delta, s.t_star))
        log.info("eps=%.3e action=%.10g residual=%.2e index=%d", eps, rec.action.total,
                 rec.residual_h1dual, rec.morse_index)
    seq = _assemble(eps_schedule, records, seps, sys, tail, action_bound)
    if action_bound is not None and seq.flags.get("bound_violated"):
        raise BoundViolated(f"action exceeded the bound {action_bound}", seq)
    return seq


def _solve_with_substeps(sys, path, eps, prev_eps, tol, max_iter, depth):
    """Newton at ``eps`` from ``path``; on failure bisect the eps step (geometrically)."""
    F = ActionFunctional(sys, path, eps)
    history = []
    try:
        y, r, it = _newton_loop(F, F.encode(path), tol, max_iter, history)
        if r <= tol:
            return F, y, history, it
        err = MaxIterations(f"residual {r:.3e} after {it} iterations")
    except (Diverged, CollisionConfiguration) as exc:
        err = exc
    if depth <= 0 or prev_eps is None:
        raise err
    mid = float(np.sqrt(eps * prev_eps))
    log.info("retrying eps=%.3e via intermediate eps=%.3e", eps, mid)
    Fm, ym, _, _ = _solve_with_substeps(sys, path, mid, prev_eps, tol, max_iter, depth - 1)
    return _solve_with_substeps(sys, Fm.decode(ym), eps, mid, tol, max_iter, depth - 1)


def _cheap_record(F, y, sys, history, it):
    path = F.decode(y)
    return CriticalPointRecord(path, F.eps, action_value(sys, path, F.eps),
                               F.dual_norm(F.grad(y)), -1, (), True, it, tuple(history))


def _assemble(schedule, records, seps, sys, tail, action_bound):
    if not records:
        return WeakCriticalSequence(tuple(schedule), [], None, float("nan"), {}, -1, seps)
    actions = [r.action.total for r in records]
    bound = float(action_bound) if action_bound is not None else float(max(actions)) * (1 + 1e-12)
    tail_recs = records[-tail:]
    sup = tuple(sup_distance(b.path, a.path) for a, b in zip(records[:-1], records[1:]))
    lam = {}
    for p, series in seps.items():
        if len(series) >= 2:
            e = [s[0] for s in series]
            d = [s[1] for s in series]
            lam[p] = tuple(np.asarray(e) / np.asarray(d) ** (2.0 - sys.alpha))
    flags = {
        "bound_violated": bool(max(actions) > bound),
        "all_converged": all(r.converged for r in records),
        "sup_cauchy_decreasing": bool(len(sup) < 2 or np.all(np.diff(sup[-(tail - 1):]) < 0)),
    }
    return WeakCriticalSequence(tuple(schedule), list(records), records[-1].path, bound, lam,
                                int(min(r.morse_index for r in tail_recs)), seps, sup,
                                tail, flags)


def _seed_path(sys, qa, qb, times, strategy, rng):
    if isinstance(strategy, DiscretePath):
        return resample(strategy, times) if len(strategy.times) != len(times) else strategy
    if callable(strategy):
        nodes = strategy(sys, times, rng)
        return make_path(sys, qa, qb, init=nodes, times=times)
    if isinstance(strategy, np.ndarray):
        return make_path(sys, qa, qb, init=strategy, times=times)
    if strategy in ("linear", "minimize"):
        base = make_path(sys, qa, qb, times=times)
        offset = rng.standard_normal((sys.N, sys.d)) * 1e-2
        offset -= sys.m @ offset / sys.total_mass
        w = np.sin(np.pi * (times - times[0]) / (times[-1] - times[0]))
        nodes = np.array(base.nodes) + w[:, None, None] * offset
        nodes[0], nodes[-1] = base.nodes[0], base.nodes[-1]
        return DiscretePath(sys, times, nodes)
    raise ValueError(f"unknown seed strategy {strategy!r}")


def two_body_loop_seed(L: float, delta0: float, plane_normal=None):
    """Seed strategy for the two-body bounce: a planar loop around the origin.

    The relative position starts and ends at ``L*e_x`` and winds once
    around the origin, reaching distance ``delta0`` on the ``-x`` side at
    mid-time. The loop plane contains ``e_x``; its orientation comes from
    ``plane_normal`` or the seeded RNG.
    """
    def seed(sys, times, rng):
        if sys.N != 2:
            raise ValueError("the loop seed is for two bodies")
        ex = np.zeros(sys.d)
        ex[0] = 1.0
        if plane_normal is None:
            v = rng.standard_normal(sys.d)
        else:
            v = np.asarray(plane_normal, dtype=float)
        v[0] = 0.0
        ey = v / np.linalg.norm(v)
        s = (times - times[0]) / (times[-1] - times[0])
        theta = 2.0 * np.pi * s
        # radius: L at the ends, delta0 at mid-time
        r = delta0 + (L - delta0) * np.abs(np.cos(np.pi * s)) ** 1.5
        eta = r[:, None] * (np.cos(theta)[:, None] * ex + np.sin(theta)[:, None] * ey)
        m1, m2 = sys.m
        nodes = np.stack([-m2 / (m1 + m2) * eta, m1 / (m1 + m2) * eta], axis=1)
        return nodes
    return seed


# -- index bound -------------------------------------------------------------------

def verify_index_bound(seq: WeakCriticalSequence, events=None) -> dict:
    """Instantiate ``(d-2) * i(alpha) * B <= index`` on a computed sequence."""
    from .collision import detect_collisions
    from .limitprob import index_i
    sys = seq.system
    if events is None:
        events = detect_collisions(seq) if len(seq.records) >= 3 else []
    B = sum(1 for e in events if e.kind == "binary")
    lhs = (sys.d - 2) * index_i(sys.alpha) * B
    rhs = int(seq.index_liminf)
    return {"B": int(B), "lhs": int(lhs), "rhs": rhs, "holds": bool(lhs <= rhs)}


# -- estimator wrappers --------------------------------------------------------------

class BounceContinuation(BaseEstimator):
    """Estimator-style wrapper: ``fit(schedule)`` runs the continuation.

    Parameters mirror :func:`continuation`; ``sequence_`` holds the result.
    """

    def __init__(self, system=None, qa=None, qb=None, M=64, t1=0.0, t2=1.0, tol=1e-8,
                 grid="uniform", kappa=0.05, seed_strategy="linear", seed=0, tail=4):
        self.system = system
        self.qa = qa
        self.qb = qb
        self.M = M
        self.t1 = t1
        self.t2 = t2
        self.tol = tol
        self.grid = grid
        self.kappa = kappa
        self.seed_strategy = seed_strategy
        self.seed = seed
        self.tail = tail

    def fit(self, eps_schedule, y=None):
        self.sequence_ = continuation(
            self.system, self.qa, self.qb, eps_schedule, tol=self.tol,
            seed_strategy=self.seed_strategy, M=self.M, t1=self.t1, t2=self.t2,
            grid=self.grid, kappa=self.kappa, seed=self.seed, tail=self.tail)
        self.index_liminf_ = self.sequence_.index_liminf
        return self
