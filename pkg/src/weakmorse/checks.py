"""Invariant suites behind ``weakmorse check``.

Each check returns a plain dict ``{suite, name, value, tol, passed}``.
Finite differences are used only here and in the tests.
"""
from __future__ import annotations

import numpy as np

from .action import ActionFunctional
from .core import MassSystem, grad_potential, hessian_apply, potential_strong, potential_weak
from .path import DiscretePath, PathVariation, h1_inner, uniform_times

FAULTS = ("corrupt-gradient",)


def _result(suite, name, value, tol):
    return {"suite": suite, "name": name, "value": float(value), "tol": float(tol),
            "passed": bool(np.isfinite(value) and value <= tol)}


def _random_config(rng, N, d, spread=1.0):
    while True:
        q = rng.standard_normal((N, d)) * spread
        diff = q[:, None] - q[None]
        r = np.linalg.norm(diff, axis=-1) + np.eye(N)
        if r.min() > 0.2 * spread:
            return q


def _random_path(rng, sys, M):
    nodes = np.stack([_random_config(rng, sys.N, sys.d) for _ in range(M)])
    nodes -= np.tensordot(nodes, sys.m, axes=(1, 0))[:, None, :] / sys.total_mass
    return DiscretePath(sys, uniform_times(0.0, 1.0, M), nodes)


def _rel(a, b):
    return float(np.linalg.norm(np.ravel(a) - np.ravel(b)) / max(np.linalg.norm(b), 1e-300))


def core_suite(rng, systems, eps, rel_tol, n_samples, grad=grad_potential):
    out = []
    worst_g = worst_h = worst_sym = worst_tr = 0.0
    for sys in systems:
        for _ in range(n_samples):
            q = _random_config(rng, sys.N, sys.d)
            step = 1e-5
            fd = np.zeros_like(q)
            f = lambda x: potential_weak(sys, x) + eps * potential_strong(sys, x)
            for idx in np.ndindex(q.shape):
                e = np.zeros_like(q)
                e[idx] = step
                fd[idx] = (f(q + e) - f(q - e)) / (2 * step)
            worst_g = max(worst_g, _rel(grad(sys, q, eps), fd))
            v = rng.standard_normal(q.shape)
            w = rng.standard_normal(q.shape)
            hv = hessian_apply(sys, q, eps, v)
            fdh = (grad(sys, q + step * v, eps) - grad(sys, q - step * v, eps)) / (2 * step)
            worst_h = max(worst_h, _rel(hv, fdh))
            hw = hessian_apply(sys, q, eps, w)
            worst_sym = max(worst_sym, abs(np.sum(hv * w) - np.sum(hw * v))
                            / max(abs(np.sum(hv * w)), 1.0))
            shift = q + rng.standard_normal(sys.d)
            worst_tr = max(worst_tr, abs(f(shift) - f(q)) / f(q))
    out.append(_result("core", "gradient_fd", worst_g, rel_tol))
    out.append(_result("core", "hessian_fd", worst_h, rel_tol))
    out.append(_result("core", "hessian_symmetry", worst_sym, 1e-12))
    out.append(_result("core", "translation_invariance", worst_tr, 1e-13))
    return out


def path_suite(rng):
    sys = MassSystem(2, (1.0, 1.0), 1.0)
    times = uniform_times(0.0, 1.0, 11)
    vals = np.zeros((11, 2, 2))
    vals[4, 0, 0] = 1.0
    u = PathVariation(vals, times)
    stencil = abs(h1_inner(sys, u, u) - 20.1)
    sys3 = MassSystem(3, (1.0, 2.0, 0.5), 1.0)
    a = PathVariation.from_interior(rng.standard_normal((9, 3, 3)), times)
    b = PathVariation.from_interior(rng.standard_normal((9, 3, 3)), times)
    sym = abs(h1_inner(sys3, a, b) - h1_inner(sys3, b, a))
    return [_result("path", "h1_stencil", stencil, 1e-12),
            _result("path", "h1_symmetry", sym, 1e-12)]


def action_suite(rng, systems, eps, M, rel_tol, n_samples, corrupt=False):
    worst_g = worst_h = 0.0
    step = 1e-5
    for sys in systems:
        for _ in range(n_samples):
            path = _random_path(rng, sys, M)
            F = ActionFunctional(sys, path, eps)
            y = F.encode(path)
            g = F.grad(y)
            if corrupt:
                g = g * (1.0 + 1e-3)
            fd = np.empty_like(y)
            for k in range(len(y)):
                e = np.zeros_like(y)
                e[k] = step
                fd[k] = (F.value(y + e) - F.value(y - e)) / (2 * step)
            worst_g = max(worst_g, _rel(g, fd))
            v = rng.standard_normal(len(y))
            fdh = (F.grad(y + step * v) - F.grad(y - step * v)) / (2 * step)
            worst_h = max(worst_h, _rel(F.hess(y).matvec(v), fdh))
    return [_result("action", "gradient_fd", worst_g, rel_tol),
            _result("action", "hessian_fd", worst_h, rel_tol)]


def run_checks(config: dict, rng, fault: str | None = None) -> list:
    d = int(config.get("d", 3))
    alpha = float(config.get("alpha", 1.0))
    eps = float(config.get("eps", 0.01))
    tol = float(config.get("rel_tol", 1e-6))
    n = int(config.get("n_samples", 5))
    M = int(config.get("M", 16))
    systems = [MassSystem(d, tuple(rng.uniform(0.5, 2.0, N)), alpha)
               for N in config.get("bodies", [2, 3, 4])]
    corrupt = fault == "corrupt-gradient"
    grad = grad_potential
    if corrupt:
        def grad(sys, q, e=0.0):
            return grad_potential(sys, q, e) * (1.0 + 1e-3)
    return (core_suite(rng, systems, eps, tol, n, grad) + path_suite(rng)
            + action_suite(rng, systems, eps, M, tol, n, corrupt))
