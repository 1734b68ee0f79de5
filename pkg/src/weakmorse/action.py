"""The discrete action, its gradient and its second variation.

Kinetic energy is integrated exactly for the piecewise-linear interpolant
and the potentials ``U + eps*V`` by the segment-midpoint rule. Interior
nodes are the unknowns; endpoints stay fixed.

Second-order objects are expressed in *reduced* coordinates: each interior
node is ``q_k = P @ y_k`` with ``P`` the mass-orthonormal basis of centered
configurations (:func:`weakmorse.core.center_basis`). In these coordinates
the kinetic Hessian and the H1 Gram are both ``(1-D matrix) (x) I``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg

from ._validation import DISTANCE_FLOOR, check_eps
from .core import (MassSystem, batch_gradient, batch_pair_hessians,
                   batch_potential_parts, center_basis)
from .exceptions import GridMismatch
from .path import DiscretePath, PathVariation, h1_gram_1d


class ActionValue(NamedTuple):
    total: float
    kinetic: float
    weak_pot: float
    strong_pot: float
    eps: float


def kinetic_energy_segments(sys: MassSystem, path: DiscretePath) -> np.ndarray:
    """``K = 1/2 sum m_i |v_i|^2`` on every segment."""
    v = path.velocities()
    return 0.5 * np.einsum("i,kid,kid->k", sys.m, v, v)


def action_value(sys: MassSystem, path: DiscretePath, eps: float = 0.0,
                 floor: float = DISTANCE_FLOOR) -> ActionValue:
    eps = check_eps(eps)
    h = path.h
    kin = float(h @ kinetic_energy_segments(sys, path))
    U, V = batch_potential_parts(sys, path.midpoints(), floor)
    weak, strong = float(h @ U), float(h @ V)
    return ActionValue(kin + weak + eps * strong, kin, weak, strong, eps)


def action_gradient(sys: MassSystem, path: DiscretePath, eps: float = 0.0,
                    floor: float = DISTANCE_FLOOR) -> PathVariation:
    """First variation as a nodal covector ``G`` on the path grid.

    ``dA[phi] = sum_k <G_k, phi_k>`` for every fixed-ends variation ``phi``;
    the endpoint rows are zero. Each row sums to zero over bodies (the
    covector analogue of centering).
    """
    eps = check_eps(eps)
    h = path.h
    m = sys.m[None, :, None]
    mom = m * path.velocities()                      # (M-1, N, d)
    F = batch_gradient(sys, path.midpoints(), eps, floor) * (0.5 * h)[:, None, None]
    G = np.zeros_like(path.nodes)
    G[1:-1] = mom[:-1] - mom[1:] + F[:-1] + F[1:]
    return PathVariation(G, path.times)


def action_hessian_form(sys: MassSystem, path: DiscretePath, eps, u, v,
                        floor: float = DISTANCE_FLOOR) -> float:
    """Discrete second variation ``d^2 A[u, v]`` in full nodal coordinates."""
    eps = check_eps(eps)
    uv, vv = _variation_values(path, u), _variation_values(path, v)
    h = path.h
    du = np.diff(uv, axis=0) / h[:, None, None]
    dv = np.diff(vv, axis=0) / h[:, None, None]
    kin = float(np.einsum("k,i,kid,kid->", h, sys.m, du, dv))
    I, J, B = batch_pair_hessians(sys, path.midpoints(), eps, floor)
    um = 0.5 * (uv[1:] + uv[:-1])
    vm = 0.5 * (vv[1:] + vv[:-1])
    xu = um[:, I, :] - um[:, J, :]
    xv = vm[:, I, :] - vm[:, J, :]
    pot = float(np.einsum("k,kpa,kpab,kpb->", h, xu, B, xv))
    return kin + pot


def _variation_values(path, u):
    vals = u.values if isinstance(u, PathVariation) else np.asarray(u, dtype=float)
    if vals.shape != path.nodes.shape:
        raise GridMismatch(f"variation shape {vals.shape} vs path {path.nodes.shape}")
    if isinstance(u, PathVariation) and not np.array_equal(u.times, path.times):
        raise GridMismatch("variation and path use different time grids")
    return vals


@dataclass
class BandedHessian:
    """Symmetric block-tridiagonal matrix in reduced interior coordinates.

    ``ab`` is upper banded storage as used by :mod:`scipy.linalg` banded
    routines; ``block`` is the per-node block size ``d*(N-1)``.
    """

    ab: np.ndarray
    block: int

    @property
    def n(self) -> int:
        return self.ab.shape[1]

    @property
    def bandwidth(self) -> int:
        return self.ab.shape[0] - 1

    def to_dense(self) -> np.ndarray:
        u = self.bandwidth
        A = np.zeros((self.n, self.n))
        for k in range(u + 1):
            diag = self.ab[u - k, k:]
            A += np.diag(diag, k)
            if k:
                A += np.diag(diag, -k)
        return A

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = self.bandwidth
        y = self.ab[u] * x
        for k in range(1, u + 1):
            diag = self.ab[u - k, k:]
            y[:-k] += diag * x[k:]
            y[k:] += diag * x[:-k]
        return y

    def triplets(self):
        """``(row, col, value)`` of the nonzero upper-triangle entries."""
        u = self.bandwidth
        out = []
        for k in range(u + 1):
            for c in range(k, self.n):
                val = self.ab[u - k, c]
                if val != 0.0:
                    out.append((c - k, c, float(val)))
        return out

    def to_text(self) -> str:
        return "".join(f"{r} {c} {v!r}\n" for r, c, v in self.triplets())


def _blocks_to_banded(diag_blocks, off_blocks):
    """Upper banded storage of a symmetric block-tridiagonal matrix."""
    nb, b, _ = diag_blocks.shape
    n = nb * b
    u = 2 * b - 1 if nb > 1 else b - 1
    ab = np.zeros((u + 1, n))
    for k in range(nb):
        D = diag_blocks[k]
        for r in range(b):
            for c in range(r, b):
                ab[u + r - c, k * b + c] = D[r, c]
        if k + 1 < nb:
            O = off_blocks[k]            # rows of block k, cols of block k+1
            for r in range(b):
                for c in range(b):
                    row, col = k * b + r, (k + 1) * b + c
                    ab[u + row - col, col] = O[r, c]
    return ab


def assemble_hessian(sys: MassSystem, path: DiscretePath, eps: float = 0.0,
                     floor: float = DISTANCE_FLOOR, basis=None) -> BandedHessian:
    """Matrix of the second variation on interior nodes, reduced coordinates."""
    eps = check_eps(eps)
    P = center_basis(sys) if basis is None else basis
    b = P.shape[1]
    h = path.h
    M = path.M
    I, J, B = batch_pair_hessians(sys, path.midpoints(), eps, floor)
    # midpoint potential Hessian per segment in full coordinates, (M-1, Nd, Nd)
    N, d = sys.N, sys.d
    Hseg = np.zeros((M - 1, N, d, N, d))
    for p, (i, j) in enumerate(zip(I, J)):
        Hseg[:, i, :, i, :] += B[:, p]
        Hseg[:, j, :, j, :] += B[:, p]
        Hseg[:, i, :, j, :] -= B[:, p]
        Hseg[:, j, :, i, :] -= B[:, p]
    Hseg = Hseg.reshape(M - 1, N * d, N * d)
    Hred = np.einsum("ai,kab,bj->kij", P, Hseg, P) * (0.25 * h)[:, None, None]
    eye = np.eye(b)
    inv_h = 1.0 / h
    diag = (inv_h[:-1] + inv_h[1:])[:, None, None] * eye + Hred[:-1] + Hred[1:]
    off = -inv_h[1:-1, None, None] * eye + Hred[1:-1]
    return BandedHessian(_blocks_to_banded(diag, off), b)


def reduced_gram(path: DiscretePath, block: int) -> BandedHessian:
    """H1 Gram of interior variations in reduced coordinates."""
    g = h1_gram_1d(path.times)
    nb = g.shape[1]
    eye = np.eye(block)
    diag = g[1][:, None, None] * eye
    off = g[0, 1:][:, None, None] * eye
    return BandedHessian(_blocks_to_banded(diag, off), block)


def reduced_l2_gram(path: DiscretePath, block: int) -> BandedHessian:
    """Lumped mass-weighted L2 Gram in reduced coordinates (diagonal)."""
    from .path import l2_gram_1d
    w = np.repeat(l2_gram_1d(path.times), block)
    return BandedHessian(w[None, :], block)


def to_reduced(sys: MassSystem, G, basis=None) -> np.ndarray:
    """Project interior covector rows ``G[1:-1]`` onto reduced coordinates."""
    P = center_basis(sys) if basis is None else basis
    G = G.values if isinstance(G, PathVariation) else np.asarray(G, dtype=float)
    return (G[1:-1].reshape(len(G) - 2, -1) @ P).ravel()


def from_reduced(sys: MassSystem, y, M: int, basis=None) -> np.ndarray:
    """Map reduced interior coordinates to full (M, N, d) variation values."""
    P = center_basis(sys) if basis is None else basis
    y = np.asarray(y, dtype=float).reshape(M - 2, P.shape[1])
    vals = np.zeros((M, sys.N, sys.d))
    vals[1:-1] = (y @ P.T).reshape(M - 2, sys.N, sys.d)
    return vals


def h1_dual_norm(sys: MassSystem, path: DiscretePath, G, basis=None) -> float:
    """Dual H1 norm ``sqrt(g^T B^{-1} g)`` of a nodal covector."""
    P = center_basis(sys) if basis is None else basis
    g = to_reduced(sys, G, P)
    gram = reduced_gram(path, P.shape[1])
    z = linalg.solveh_banded(gram.ab, g)
    return float(np.sqrt(max(g @ z, 0.0)))


class ActionFunctional:
    """``A^eps`` as a function of reduced interior coordinates.

    This is the interface the critical-point solvers work against; a toy
    functional with the same methods can be swapped in for validation.
    """

    def __init__(self, sys: MassSystem, template: DiscretePath, eps: float = 0.0,
                 floor: float = DISTANCE_FLOOR):
        self.sys = sys
        self.template = template
        self.eps = check_eps(eps)
        self.floor = floor
        self.P = center_basis(sys)
        self.block = self.P.shape[1]
        self.gram = reduced_gram(template, self.block)

    @property
    def n(self) -> int:
        return (self.template.M - 2) * self.block

    def encode(self, path: DiscretePath) -> np.ndarray:
        M = path.M
        q = path.nodes[1:-1].reshape(M - 2, -1) * np.repeat(self.sys.m, self.sys.d)
        # P is mass-orthonormal, so coordinates are P^T diag(m) q
        return (q @ self.P).ravel()

    def decode(self, y) -> DiscretePath:
        M = self.template.M
        y = np.asarray(y, dtype=float).reshape(M - 2, self.block)
        nodes = np.array(self.template.nodes)
        nodes[1:-1] = (y @ self.P.T).reshape(M - 2, self.sys.N, self.sys.d)
        return DiscretePath(self.sys, self.template.times, nodes)

    def value(self, y) -> float:
        return action_value(self.sys, self.decode(y), self.eps, self.floor).total

    def grad(self, y) -> np.ndarray:
        G = action_gradient(self.sys, self.decode(y), self.eps, self.floor)
        return to_reduced(self.sys, G, self.P)

    def hess(self, y) -> BandedHessian:
        return assemble_hessian(self.sys, self.decode(y), self.eps, self.floor, self.P)

    def dual_norm(self, g) -> float:
        z = linalg.solveh_banded(self.gram.ab, g)
        return float(np.sqrt(max(g @ z, 0.0)))
