"""Limiting central-force problems of a blown-up binary collision.

The rescaled relative position solves, at zero energy and with pericenter
``|xi(0)| = 1``,

    (1/M) xi'' = -alpha xi/|xi|^(alpha+2) - 2 lam xi/|xi|^4,

and for ``lam = inf`` the strong-force-only problem
``(1/M) zeta'' = -2 zeta/|zeta|^4``, whose zero-energy orbit from a
perpendicular start is the unit circle.

Transverse second variations are 1-D Schrodinger forms
``int phi'^2/M + W(s) phi^2 ds`` discretized with linear elements; their
negative counts are compared with the winding numbers ``i(alpha, lam)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from ._validation import check_alpha, check_lambda
from .action import BandedHessian
from .exceptions import (IntegrationFailure, RadiusNotReached, TruncationTooSmall,
                         WindowNotCovered)
from .spectral import block_sturm_count


# -- index formulas ----------------------------------------------------------------

def _max_int_below(x: float) -> int:
    k = math.ceil(x) - 1
    return int(k)


def index_i(alpha) -> int:
    """Largest integer strictly below ``2/(2-alpha)``."""
    alpha = check_alpha(alpha)
    return _max_int_below(2.0 / (2.0 - alpha))


def index_i_lambda(alpha, lam) -> int:
    """Largest integer strictly below ``2*sqrt(1+lam)/(2-alpha)``."""
    alpha = check_alpha(alpha)
    lam = check_lambda(lam)
    if lam == 0.0:
        return index_i(alpha)
    return _max_int_below(2.0 * math.sqrt(1.0 + lam) / (2.0 - alpha))


def asymptotic_angle_theory(alpha, lam) -> float:
    """Angle ``2*pi*sqrt(1+lam)/(2-alpha)`` between the asymptotic directions."""
    alpha = check_alpha(alpha)
    lam = check_lambda(lam)
    return 2.0 * math.pi * math.sqrt(1.0 + lam) / (2.0 - alpha)


# -- orbits ------------------------------------------------------------------------

@dataclass
class LimitOrbit:
    alpha: float
    lam: float
    mass_sum: float
    samples: np.ndarray              # (K, 1 + d): columns s, xi_1..xi_d
    pericenter_norm: float
    u_minus: np.ndarray
    u_plus: np.ndarray
    swept_angle: float
    velocities: np.ndarray = field(repr=False, default=None)
    plane: np.ndarray = field(repr=False, default=None)   # (d, 2) orthonormal
    _dense: tuple = field(repr=False, default=())

    @property
    def s(self) -> np.ndarray:
        return self.samples[:, 0]

    @property
    def xi(self) -> np.ndarray:
        return self.samples[:, 1:]

    @property
    def d(self) -> int:
        return self.samples.shape[1] - 1

    @property
    def s_range(self) -> tuple:
        return float(self.s[0]), float(self.s[-1])

    def state(self, s):
        """Position and velocity at ``s`` from the dense interpolants."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        lo, hi = self.s_range
        if np.any(s < lo - 1e-12 * max(1, abs(lo))) or np.any(s > hi + 1e-12 * max(1, abs(hi))):
            raise WindowNotCovered(f"s outside the integrated range [{lo}, {hi}]")
        back, fwd = self._dense
        out = np.empty((len(s), 2 * self.d))
        neg = s < 0
        if np.any(neg):
            out[neg] = back(-s[neg]).T
        if np.any(~neg):
            out[~neg] = fwd(s[~neg]).T
        return out[:, : self.d], out[:, self.d:]

    def radius(self, s) -> np.ndarray:
        x, _ = self.state(s)
        return np.linalg.norm(x, axis=1)

    def energy_residual(self) -> np.ndarray:
        """Zero-energy residual along the samples."""
        r = np.linalg.norm(self.xi, axis=1)
        v2 = np.einsum("kd,kd->k", self.velocities, self.velocities)
        if math.isinf(self.lam):
            return v2 / (2 * self.mass_sum) - 1.0 / r ** 2
        return v2 / (2 * self.mass_sum) - r ** -self.alpha - self.lam / r ** 2

    def planarity_residual(self) -> float:
        proj = self.xi @ self.plane @ self.plane.T
        return float(np.max(np.linalg.norm(self.xi - proj, axis=1)))

    def polar_angle(self) -> np.ndarray:
        """Unwrapped polar angle in the orbit plane along the samples."""
        c = self.xi @ self.plane
        return np.unwrap(np.arctan2(c[:, 1], c[:, 0]))

    def to_csv(self) -> str:
        r = np.linalg.norm(self.xi, axis=1)
        head = "s,r," + ",".join(f"x{i + 1}" for i in range(self.d)) + "\n"
        rows = [",".join(repr(float(x)) for x in (row[0], rr, *row[1:]))
                for row, rr in zip(self.samples, r)]
        return head + "\n".join(rows) + "\n"


def _rhs(alpha, lam, M):
    inf = math.isinf(lam)

    def f(s, y):
        d = len(y) // 2
        x, v = y[:d], y[d:]
        r2 = x @ x
        if inf:
            a = -2.0 * M * x / r2 ** 2
        else:
            a = -M * (alpha * x / r2 ** (alpha / 2.0 + 1.0) + 2.0 * lam * x / r2 ** 2)
        return np.concatenate([v, a])
    return f


def integrate_limit_orbit(alpha, lam, mass_sum: float = 1.0, s_max: float = 10.0, d: int = 2,
                          R: float | None = None, plane=None, rtol: float = 1e-13,
                          atol: float = 1e-14, max_step: float = np.inf) -> LimitOrbit:
    """Zero-energy orbit through pericenter ``|xi(0)| = 1`` at ``s = 0``.

    Integrates both ways with DOP853 to ``|s| = s_max``; when ``R`` is given
    each side also stops where ``|xi| = R``. ``plane`` is an optional
    ``(d, 2)`` orthonormal frame for the orbit plane (default: the first
    two coordinate axes).
    """
    alpha = check_alpha(alpha)
    lam = check_lambda(lam, allow_inf=True)
    M = float(mass_sum)
    if M <= 0:
        raise ValueError("mass_sum must be positive")
    if plane is None:
        plane = np.eye(d)[:, :2]
    plane = np.asarray(plane, dtype=float)
    if plane.shape != (d, 2) or not np.allclose(plane.T @ plane, np.eye(2), atol=1e-12):
        raise ValueError("plane must be a (d, 2) matrix with orthonormal columns")
    speed = math.sqrt(2.0 * M) if math.isinf(lam) else math.sqrt(2.0 * M * (1.0 + lam))
    y0 = np.concatenate([plane[:, 0], speed * plane[:, 1]])
    f = _rhs(alpha, lam, M)

    # backward in s: z(s) = y(-s) solves z' = -f(z)
    def back_rhs(s, z):
        return -f(-s, z)

    events = None
    if R is not None:
        def hit(s, y):
            return y[:d] @ y[:d] - R * R
        hit.terminal = True
        hit.direction = 1
        events = hit
    sols = []
    for rhs, start in ((back_rhs, y0), (f, y0)):
        sol = integrate.solve_ivp(rhs, (0.0, s_max), start, method="DOP853", rtol=rtol,
                                  atol=atol, dense_output=True, events=events,
                                  max_step=max_step)
        if sol.status < 0:
            raise IntegrationFailure(sol.message)
        sols.append(sol)
    back, fwd = sols
    s = np.concatenate([-back.t[::-1], fwd.t[1:]])
    Y = np.concatenate([back.y[:, ::-1], fwd.y[:, 1:]], axis=1).T
    X = Y[:, :d]
    V = Y[:, d:]
    orbit = LimitOrbit(alpha, lam, M, np.column_stack([s, X]), float(np.linalg.norm(X[len(back.t) - 1])),
                       np.full(d, np.nan), np.full(d, np.nan), float("nan"), V, plane,
                       (back.sol, fwd.sol))
    theta = orbit.polar_angle()
    orbit.swept_angle = float(theta[-1] - theta[0])
    if not math.isinf(lam):
        orbit.u_minus = X[0] / np.linalg.norm(X[0])
        orbit.u_plus = X[-1] / np.linalg.norm(X[-1])
    return orbit


def parabola_oracle(s):
    """Closed-form parabolic Kepler orbit (alpha=1, lam=0, M=1), pericenter 1.

    With ``D = tan(nu/2)``: ``s = sqrt(2)(D + D^3/3)``, position
    ``(1 - D^2, 2 D)``. ``D`` is the real root of the cubic.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    # D^3 + 3D - 3s/sqrt(2) = 0 : Cardano, one real root
    q = 1.5 * s / math.sqrt(2.0)
    disc = np.sqrt(q * q + 1.0)
    D = np.cbrt(q + disc) + np.cbrt(q - disc)
    return np.column_stack([1.0 - D * D, 2.0 * D]), D


def asymptotic_angle_numeric(orbit: LimitOrbit, R: float) -> float:
    """Swept angle between the two radius-``R`` crossings plus the analytic tail."""
    from scipy.optimize import brentq
    if math.isinf(orbit.lam):
        raise RadiusNotReached("the strong-force limit orbit stays on the unit circle")
    r = np.linalg.norm(orbit.xi, axis=1)
    k0 = int(np.argmin(r))
    reach = R * (1.0 - 1e-10)
    if r[: k0 + 1].max() < reach or r[k0:].max() < reach:
        raise RadiusNotReached(f"orbit does not reach radius {R} on both sides")
    theta = orbit.polar_angle()

    def crossing(k_in, k_out):
        # k_in inside radius R, k_out at or beyond it
        if abs(r[k_out] - R) <= 1e-10 * R:
            return theta[k_out]
        a, b = sorted((orbit.s[k_in], orbit.s[k_out]))
        s_star = brentq(lambda t: orbit.radius(t)[0] - R, a, b, xtol=1e-14, rtol=1e-15)
        c = (orbit.state(s_star)[0] @ orbit.plane)[0]
        ang = math.atan2(c[1], c[0])
        ref = theta[k_in]
        return ref + ((ang - ref + math.pi) % (2 * math.pi) - math.pi)

    right = k0 + int(np.argmax(r[k0:] >= reach))
    left = k0 - int(np.argmax(r[: k0 + 1][::-1] >= reach))
    th_plus = crossing(right - 1, right)
    th_minus = crossing(left + 1, left)
    a = orbit.alpha
    u = R ** ((2.0 - a) / 2.0)
    tail = math.sqrt(1.0 + orbit.lam) * (2.0 / (2.0 - a)) * math.asin(1.0 / u)
    return float(th_plus - th_minus + 2.0 * tail)


# -- transverse operator -----------------------------------------------------------

@dataclass(frozen=True)
class IndexReport:
    alpha: float
    lam: float
    i_alpha: int
    i_alpha_lambda: int
    transverse_count: int
    truncation_L: float
    mesh: int
    transverse_block_bound: int = 0
    d: int = 3

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "lambda": self.lam, "i_alpha": self.i_alpha,
                "i_alpha_lambda": self.i_alpha_lambda,
                "transverse_count": self.transverse_count, "truncation_L": self.truncation_L,
                "mesh": self.mesh, "transverse_block_count": self.transverse_block_bound,
                "d": self.d}


def transverse_weight(alpha, lam, r):
    """Potential ``W(r)`` of the transverse form ``int phi'^2/M + W phi^2``."""
    if math.isinf(lam):
        return -2.0 / r ** 4
    return -alpha / r ** (alpha + 2.0) - 2.0 * lam / r ** 4


def _transverse_matrices(alpha, lam, L, mesh, mass_sum, orbit=None, h_min=None):
    if h_min is None:
        s = np.linspace(-L, L, mesh + 1)
    else:
        from .path import graded_times
        s = graded_times(-L, L, mesh + 1, 0.0, h_min)
    h = np.diff(s)
    inner = s[1:-1]
    if math.isinf(lam):
        r = np.ones_like(inner)
    else:
        if orbit is None or orbit.s_range[1] < L:
            orbit = integrate_limit_orbit(alpha, lam, mass_sum, s_max=L * (1 + 1e-9))
        r = orbit.radius(inner)
    W = transverse_weight(alpha, lam, r)
    w = 0.5 * (h[:-1] + h[1:])                 # lumped mass
    diag = (1.0 / h[:-1] + 1.0 / h[1:]) / mass_sum + w * W
    off = np.concatenate([[0.0], -1.0 / (h[1:-1] * mass_sum)])
    H = BandedHessian(np.vstack([off, diag]), 1)
    B = BandedHessian(np.vstack([np.zeros_like(w), w]), 1)
    return H, B


def transverse_count(alpha, lam, L, mesh, mass_sum: float = 1.0, orbit=None,
                     h_min: float | None = None) -> int:
    """Negative eigenvalues of the discretized transverse form on ``[-L, L]``.

    The mesh is uniform unless ``h_min`` is given, in which case it is
    graded around ``s = 0`` (useful for very long truncations).
    """
    H, B = _transverse_matrices(alpha, lam, L, mesh, mass_sum, orbit, h_min)
    return block_sturm_count(H, B, 0.0)


def transverse_index(alpha, lam, L: float = 200.0, mesh: int = 4000, mass_sum: float = 1.0,
                     d: int = 3, check_truncation: bool = False,
                     h_min: float | None = None) -> IndexReport:
    """Transverse Morse count with the index formulas for comparison.

    ``check_truncation`` recomputes on ``[-2L, 2L]`` at the same mesh
    density and raises :class:`TruncationTooSmall` if the count changes
    (not applied to ``lam = inf``, where growth is expected).
    """
    alpha = check_alpha(alpha)
    lam = check_lambda(lam, allow_inf=True)
    count = transverse_count(alpha, lam, L, mesh, mass_sum, h_min=h_min)
    if check_truncation and not math.isinf(lam):
        count2 = transverse_count(alpha, lam, 2 * L, 2 * mesh, mass_sum, h_min=h_min)
        if count2 != count:
            raise TruncationTooSmall(f"count {count} on L={L} but {count2} on L={2 * L}")
    i_al = index_i(alpha)
    i_al_lam = index_i_lambda(alpha, lam) if not math.isinf(lam) else -1
    return IndexReport(alpha, lam, i_al, i_al_lam, count, float(L), int(mesh),
                       (d - 2) * count, d)


def limit_transverse_form(orbit: LimitOrbit, phi, dphi, support: float) -> float:
    """``d^2 I(xi)[phi e, phi e]`` for a unit vector ``e`` normal to the orbit plane."""
    lo, hi = orbit.s_range
    if support > min(-lo, hi):
        raise WindowNotCovered("phi support exceeds the integrated orbit")
    M = orbit.mass_sum

    def integrand(s):
        r = orbit.radius(s)[0]
        return dphi(s) ** 2 / M + transverse_weight(orbit.alpha, orbit.lam, r) * phi(s) ** 2

    val, _ = integrate.quad(integrand, -support, support, limit=400, epsabs=1e-13,
                            epsrel=1e-12, points=[0.0])
    return float(val)


def limit_action_value(kind: str, orbit: LimitOrbit, window) -> float:
    """Action of kind ``"I"`` (weak + lam) or ``"J"`` (strong only) over ``window``."""
    a, b = (float(w) for w in window)
    if a == b:
        return 0.0
    lo, hi = orbit.s_range
    if a < lo or b > hi or a > b:
        raise WindowNotCovered(f"window [{a}, {b}] not inside [{lo}, {hi}]")
    M = orbit.mass_sum
    if kind == "I":
        if math.isinf(orbit.lam):
            raise ValueError("kind I needs a finite-lambda orbit")

        def lag(s):
            x, v = orbit.state(s)
            r = np.linalg.norm(x)
            return v[0] @ v[0] / (2 * M) + r ** -orbit.alpha + orbit.lam / r ** 2
    elif kind == "J":
        def lag(s):
            x, v = orbit.state(s)
            r = np.linalg.norm(x)
            return v[0] @ v[0] / (2 * M) + 1.0 / r ** 2
    else:
        raise ValueError("kind must be 'I' or 'J'")
    pts = [0.0] if a < 0.0 < b else None
    val, _ = integrate.quad(lag, a, b, limit=400, epsabs=1e-13, epsrel=1e-13, points=pts)
    return float(val)


def truncated_angle(alpha, lam, L: float, mass_sum: float = 1.0) -> float:
    """Polar angle swept by the limit orbit over ``s`` in ``[-L, L]``."""
    orbit = integrate_limit_orbit(alpha, lam, mass_sum, s_max=L * (1 + 1e-9))
    th = orbit.polar_angle()
    keep = np.abs(orbit.s) <= L
    return float(abs(th[keep][-1] - th[keep][0]))


def sweep_point(alpha, lam, R: float = 1e6, L: float = 200.0, mesh: int = 4000,
                mass_sum: float = 1.0, check_convergence: bool = True) -> dict:
    """One sweep row: asymptotic angle and transverse count at ``(alpha, lam)``.

    With ``check_convergence`` the count is repeated on ``[-2L, 2L]`` at the
    same mesh density; the entry is ``converged`` when both counts agree.
    """
    theory = asymptotic_angle_theory(alpha, lam)
    orbit = integrate_limit_orbit(alpha, lam, mass_sum, s_max=1e30, R=R)
    numeric = asymptotic_angle_numeric(orbit, R)
    rep = transverse_index(alpha, lam, L, mesh, mass_sum)
    count2 = transverse_count(alpha, lam, 2 * L, 2 * mesh, mass_sum) if check_convergence \
        else rep.transverse_count
    swept = truncated_angle(alpha, lam, L, mass_sum)
    # the window [-L, L] resolves the index only once the angle the orbit
    # sweeps inside it already exceeds i(alpha, lam) half-turns
    converged = (count2 == rep.transverse_count
                 and _max_int_below(swept / math.pi) == rep.i_alpha_lambda)
    return {"alpha": float(alpha), "lambda": float(lam), "theory_angle": theory,
            "numeric_angle": numeric, "angle_error": abs(numeric - theory),
            "i_alpha_lambda": rep.i_alpha_lambda, "transverse_count": rep.transverse_count,
            "count_2L": int(count2), "swept_angle_L": swept, "converged": bool(converged),
            "bound_holds": bool(rep.transverse_count >= rep.i_alpha_lambda),
            "L": float(L), "mesh": int(mesh)}


def sweep(alphas, lams, R: float = 1e6, L: float = 200.0, mesh: int = 4000,
          mass_sum: float = 1.0, check_convergence: bool = True) -> list:
    """Angle and index sweep over a grid; rows for CSV export."""
    return [sweep_point(a, lam, R, L, mesh, mass_sum, check_convergence)
            for a in alphas for lam in lams]
