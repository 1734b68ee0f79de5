"""Mass systems, configurations and the weak/strong force potentials.

Conventions: bodies are indexed from 0, configurations are ``(N, d)``
arrays and the potentials are the *positive* functions

    U(q)  = sum_{i<j} m_i m_j / |q_i - q_j|**alpha
    V(q)  = sum_{i<j} m_i m_j / |q_i - q_j|**2

so the Lagrangian is ``K + U + eps * V``. Every function here is pure.
Batched variants (leading axis of configurations) are used by the action
module to evaluate all segment midpoints at once.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._validation import DISTANCE_FLOOR, check_alpha, check_configuration, check_eps
from .exceptions import CollisionConfiguration


@dataclass(frozen=True)
class MassSystem:
    """Masses, spatial dimension and force exponent of an N-body problem."""

    d: int
    masses: tuple
    alpha: float

    def __post_init__(self):
        masses = tuple(float(m) for m in np.ravel(self.masses))
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"spatial dimension d must be an integer >= 2, got {self.d}")
        if len(masses) < 2:
            raise ValueError("at least two bodies are required")
        if not all(np.isfinite(m) and m > 0 for m in masses):
            raise ValueError(f"masses must be positive, got {masses}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "alpha", check_alpha(self.alpha))

    @property
    def N(self) -> int:
        return len(self.masses)

    @property
    def m(self) -> np.ndarray:
        return np.asarray(self.masses)

    @property
    def total_mass(self) -> float:
        return float(sum(self.masses))

    def pairs(self):
        """Index arrays ``(I, J)`` of all pairs ``i < j``."""
        return np.triu_indices(self.N, k=1)

    def with_alpha(self, alpha) -> "MassSystem":
        # α = 2 is outside the weak-force domain; only used for the V identity.
        obj = object.__new__(MassSystem)
        object.__setattr__(obj, "d", self.d)
        object.__setattr__(obj, "masses", self.masses)
        object.__setattr__(obj, "alpha", float(alpha))
        return obj

    def to_dict(self) -> dict:
        return {"d": self.d, "alpha": self.alpha, "masses": list(self.masses)}

    @classmethod
    def from_dict(cls, data: dict) -> "MassSystem":
        return cls(d=data["d"], masses=tuple(data["masses"]), alpha=data["alpha"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MassSystem":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ClusterIndex:
    """A nonempty set of body indices (0-based)."""

    members: tuple

    def __post_init__(self):
        members = tuple(sorted(set(int(i) for i in self.members)))
        if not members:
            raise ValueError("a cluster must be nonempty")
        if members[0] < 0:
            raise ValueError("cluster indices must be non-negative")
        object.__setattr__(self, "members", members)

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def validate(self, N: int) -> "ClusterIndex":
        if self.members[-1] >= N:
            raise ValueError(f"cluster {self.members} has indices outside 0..{N - 1}")
        return self

    def complement(self, N: int) -> tuple:
        self.validate(N)
        return tuple(i for i in range(N) if i not in self.members)


class ClusterPotentials(NamedTuple):
    U_I: float
    fU_I: float
    U_cross: float
    fU_cross: float


# -- batched pair kernels ------------------------------------------------------

def _pair_geometry(sys: MassSystem, Q: np.ndarray, floor: float, pairs=None):
    """Relative vectors and distances for a batch ``Q`` of shape (K, N, d)."""
    I, J = sys.pairs() if pairs is None else pairs
    X = Q[:, I, :] - Q[:, J, :]
    r = np.sqrt(np.einsum("kpd,kpd->kp", X, X))
    if r.size and r.min() < floor:
        k, p = np.unravel_index(np.argmin(r), r.shape)
        raise CollisionConfiguration((int(I[p]), int(J[p])), float(r[k, p]), floor)
    return I, J, X, r


def _coupling(sys, I, J):
    m = sys.m
    return m[I] * m[J]


def batch_potential(sys, Q, eps=0.0, floor=DISTANCE_FLOOR):
    """``U + eps*V`` at every configuration of the batch; shape (K,)."""
    I, J, _, r = _pair_geometry(sys, Q, floor)
    c = _coupling(sys, I, J)
    out = (c * r ** (-sys.alpha)).sum(axis=1)
    if eps:
        out = out + eps * (c * r ** (-2.0)).sum(axis=1)
    return out


def batch_potential_parts(sys, Q, floor=DISTANCE_FLOOR):
    """``(U, V)`` for each configuration of the batch."""
    I, J, _, r = _pair_geometry(sys, Q, floor)
    c = _coupling(sys, I, J)
    return (c * r ** (-sys.alpha)).sum(axis=1), (c * r ** (-2.0)).sum(axis=1)


def batch_gradient(sys, Q, eps=0.0, floor=DISTANCE_FLOOR):
    """Gradient of ``U + eps*V`` for a batch; shape (K, N, d)."""
    I, J, X, r = _pair_geometry(sys, Q, floor)
    c = _coupling(sys, I, J)
    a = -c * (sys.alpha * r ** (-sys.alpha - 2.0) + 2.0 * eps * r ** (-4.0))
    F = a[..., None] * X
    G = np.zeros_like(Q)
    for p, (i, j) in enumerate(zip(I, J)):
        G[:, i, :] += F[:, p, :]
        G[:, j, :] -= F[:, p, :]
    return G


def batch_pair_hessians(sys, Q, eps=0.0, floor=DISTANCE_FLOOR):
    """Second derivative of each pair term w.r.t. the relative vector.

    Returns ``(I, J, B)`` with ``B`` of shape (K, P, d, d).
    """
    I, J, X, r = _pair_geometry(sys, Q, floor)
    c = _coupling(sys, I, J)
    al = sys.alpha
    a = -c * (al * r ** (-al - 2.0) + 2.0 * eps * r ** (-4.0))
    b = c * (al * (al + 2.0) * r ** (-al - 4.0) + 8.0 * eps * r ** (-6.0))
    eye = np.eye(sys.d)
    B = a[..., None, None] * eye + b[..., None, None] * X[..., :, None] * X[..., None, :]
    return I, J, B


def batch_hessian(sys, Q, eps=0.0, floor=DISTANCE_FLOOR):
    """Dense Hessians of ``U + eps*V``; shape (K, N, d, N, d)."""
    I, J, B = batch_pair_hessians(sys, Q, eps, floor)
    K = Q.shape[0]
    H = np.zeros((K, sys.N, sys.d, sys.N, sys.d))
    for p, (i, j) in enumerate(zip(I, J)):
        H[:, i, :, i, :] += B[:, p]
        H[:, j, :, j, :] += B[:, p]
        H[:, i, :, j, :] -= B[:, p]
        H[:, j, :, i, :] -= B[:, p]
    return H


# -- public single-configuration API --------------------------------------------

def potential_weak(sys: MassSystem, q, floor: float = DISTANCE_FLOOR) -> float:
    """``U(q) = sum m_i m_j / |q_i - q_j|**alpha``."""
    q = check_configuration(sys, q)
    return float(batch_potential(sys, q[None], 0.0, floor)[0])


def potential_strong(sys: MassSystem, q, floor: float = DISTANCE_FLOOR) -> float:
    """The strong-force term ``V(q) = sum m_i m_j / |q_i - q_j|**2``."""
    q = check_configuration(sys, q)
    return float(batch_potential_parts(sys, q[None], floor)[1][0])


def grad_potential(sys: MassSystem, q, eps: float = 0.0,
                   floor: float = DISTANCE_FLOOR) -> np.ndarray:
    q = check_configuration(sys, q)
    return batch_gradient(sys, q[None], check_eps(eps), floor)[0]


def hessian_dense(sys: MassSystem, q, eps: float = 0.0,
                  floor: float = DISTANCE_FLOOR) -> np.ndarray:
    """Hessian of ``U + eps*V`` as a ``(dN, dN)`` matrix (row-major bodies)."""
    q = check_configuration(sys, q)
    n = sys.N * sys.d
    return batch_hessian(sys, q[None], check_eps(eps), floor)[0].reshape(n, n)


def hessian_apply(sys: MassSystem, q, eps, v, floor: float = DISTANCE_FLOOR) -> np.ndarray:
    """Apply ``D^2 (U + eps*V)(q)`` to a configuration-shaped direction ``v``."""
    q = check_configuration(sys, q)
    v = check_configuration(sys, v, name="v")
    I, J, B = batch_pair_hessians(sys, q[None], check_eps(eps), floor)
    out = np.zeros_like(v)
    for p, (i, j) in enumerate(zip(I, J)):
        w = B[0, p] @ (v[i] - v[j])
        out[i] += w
        out[j] -= w
    return out


def cluster_potentials(sys: MassSystem, q, cluster: ClusterIndex,
                       floor: float = DISTANCE_FLOOR) -> ClusterPotentials:
    """Split ``U`` and ``V`` into the intra-cluster and cross-cluster parts.

    Only the pairs entering a term are checked against the floor, so a
    collision inside the complement does not prevent evaluating the cluster.
    """
    q = check_configuration(sys, q)
    members = cluster.validate(sys.N).members
    outside = cluster.complement(sys.N)
    m = sys.m

    def _sum(pairs):
        if len(pairs[0]) == 0:
            return 0.0, 0.0
        I, J = np.asarray(pairs[0], dtype=int), np.asarray(pairs[1], dtype=int)
        _, _, _, r = _pair_geometry(sys, q[None], floor, pairs=(I, J))
        c = m[I] * m[J]
        return float((c * r[0] ** (-sys.alpha)).sum()), float((c * r[0] ** -2.0).sum())

    inner = ([i for a, i in enumerate(members) for j in members[a + 1:]],
             [j for a, i in enumerate(members) for j in members[a + 1:]])
    cross = ([i for i in members for j in outside], [j for i in members for j in outside])
    U_I, fU_I = _sum(inner)
    U_x, fU_x = _sum(cross)
    return ClusterPotentials(U_I, fU_I, U_x, fU_x)


def center_of_mass(sys: MassSystem, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.tensordot(sys.m, q, axes=(0, -2)) / sys.total_mass


def project_center_of_mass(sys: MassSystem, q) -> np.ndarray:
    """Translate ``q`` so the mass-weighted center sits at the origin."""
    q = check_configuration(sys, q)
    com = center_of_mass(sys, q)
    # a rounding-level center is left alone so the projection is idempotent
    if np.all(np.abs(com) <= 8 * np.finfo(float).eps * max(1.0, float(np.abs(q).max()))):
        return q.copy()
    return q - com


def is_centered(sys: MassSystem, q, tol: float = 1e-12) -> bool:
    q = np.asarray(q, dtype=float)
    scale = max(1.0, float(np.abs(q).max(initial=0.0)))
    return bool(np.abs(sys.m @ q).max() <= tol * scale * sys.total_mass)


def center_basis(sys: MassSystem) -> np.ndarray:
    """Mass-orthonormal basis of the centered configuration space.

    Returns ``P`` of shape ``(N*d, (N-1)*d)``: columns ``p`` satisfy
    ``sum_i m_i p_i = 0`` and ``P.T @ diag(m (x) 1_d) @ P = I``.
    """
    sq = np.sqrt(sys.m)
    # orthonormal complement of sqrt(m) in R^N via a full QR
    Qfull, _ = np.linalg.qr(np.column_stack([sq, np.eye(sys.N)[:, : sys.N - 1]]))
    Y = Qfull[:, 1:]
    A = Y / sq[:, None]
    return np.kron(A, np.eye(sys.d))


def pair_distances(sys: MassSystem, q) -> np.ndarray:
    """Symmetric ``(N, N)`` matrix of pair distances."""
    q = check_configuration(sys, q)
    diff = q[:, None, :] - q[None, :, :]
    return np.sqrt(np.einsum("ijd,ijd->ij", diff, diff))
