"""Morse index of the discrete second variation.

The index is the number of negative eigenvalues of ``H v = mu B v`` where
``H`` is the assembled Hessian and ``B`` a positive-definite Gram matrix on
interior nodes (H1 by default). Small problems are solved densely. Large
ones use a block Sturm count: for a block-tridiagonal symmetric matrix the
inertia is the sum of the inertias of the Schur-complement pivots.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import ArpackError, eigsh

from .action import (BandedHessian, assemble_hessian, reduced_gram,
                     reduced_l2_gram)
from .core import center_basis
from .exceptions import EigenSolveFailure
from .path import resample, uniform_times

DENSE_LIMIT = 3000
ZTOL_REL = 1e-9


@dataclass(frozen=True)
class SpectralReport:
    num_negative: int
    eigenvalues_below_cutoff: tuple
    cutoff: float
    grid_M: int
    ztol: float = 0.0
    zero_band: tuple = ()
    method: str = "dense"
    eigenvectors: np.ndarray | None = field(default=None, repr=False, compare=False)
    mode_eigenvalues: tuple = field(default=(), repr=False, compare=False)

    def to_dict(self, with_modes: bool = False) -> dict:
        out = {
            "num_negative": self.num_negative,
            "eigenvalues_below_cutoff": list(self.eigenvalues_below_cutoff),
            "cutoff": self.cutoff,
            "grid_M": self.grid_M,
            "ztol": self.ztol,
            "zero_band": list(self.zero_band),
            "method": self.method,
        }
        if with_modes and self.eigenvectors is not None:
            out["lowest_modes"] = [
                {"eigenvalue": mu, "vector": v.tolist()}
                for mu, v in zip(self.mode_eigenvalues, self.eigenvectors.T)]
        return out

    def to_json(self, with_modes: bool = False) -> str:
        return json.dumps(self.to_dict(with_modes), sort_keys=True)


def _banded_blocks(A: BandedHessian):
    """Recover diagonal and upper off-diagonal blocks of a block-tridiagonal matrix."""
    b, u = A.block, A.bandwidth
    nb = A.n // b
    diag = np.empty((nb, b, b))
    off = np.empty((max(nb - 1, 0), b, b))
    for k in range(nb):
        for r in range(b):
            for c in range(b):
                row, col = k * b + r, k * b + c
                lo, hi = min(row, col), max(row, col)
                diag[k, r, c] = A.ab[u + lo - hi, hi] if hi - lo <= u else 0.0
        if k + 1 < nb:
            for r in range(b):
                for c in range(b):
                    row, col = k * b + r, (k + 1) * b + c
                    off[k, r, c] = A.ab[u + row - col, col] if col - row <= u else 0.0
    return diag, off


def block_sturm_count(H: BandedHessian, B: BandedHessian, shift: float) -> int:
    """Number of generalized eigenvalues of ``(H, B)`` strictly below ``shift``.

    By Sylvester's law this is the negative inertia of ``H - shift*B``,
    accumulated over the block LDL^T pivots.
    """
    Hd, Ho = _banded_blocks(H)
    Bd, Bo = _banded_blocks(B)
    D = Hd - shift * Bd
    O = Ho - shift * Bo
    count = 0
    S = D[0]
    for k in range(len(D)):
        if k:
            S = D[k] - O[k - 1].T @ linalg.solve(S_prev, O[k - 1], assume_a="sym")
        w = linalg.eigvalsh(S)
        if np.any(w == 0.0):
            raise EigenSolveFailure("singular pivot in the Sturm count; perturb the shift")
        count += int(np.sum(w < 0.0))
        S_prev = S
    return count


def _scale_estimate(H: BandedHessian, B: BandedHessian) -> float:
    u = H.bandwidth
    return float(np.max(np.abs(H.ab[u] / B.ab[B.bandwidth])))


def _gram(path, block, gram):
    if gram == "h1":
        return reduced_gram(path, block)
    if gram == "l2":
        return reduced_l2_gram(path, block)
    raise ValueError(f"unknown gram {gram!r}; use 'h1' or 'l2'")


def spectral_report(H: BandedHessian, B: BandedHessian, grid_M: int,
                    ztol: float | None = None, cutoff: float | None = None,
                    method: str = "auto") -> SpectralReport:
    """Index and low spectrum of the pencil ``(H, B)``."""
    n = H.n
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "sturm"
    if method == "dense":
        try:
            mu, V = linalg.eigh(H.to_dense(), B.to_dense())
        except (linalg.LinAlgError, ValueError) as exc:
            raise EigenSolveFailure(str(exc)) from exc
        scale = float(np.max(np.abs(mu))) if n else 1.0
        ztol = ZTOL_REL * scale if ztol is None else float(ztol)
        cutoff = ztol if cutoff is None else float(cutoff)
        neg = mu < -ztol
        band = np.abs(mu) <= ztol
        below = mu < cutoff
        if band.any():
            warnings.warn(f"{int(band.sum())} eigenvalue(s) inside the zero band", stacklevel=2)
        return SpectralReport(int(neg.sum()), tuple(float(x) for x in mu[below]), cutoff,
                              grid_M, ztol, tuple(float(x) for x in mu[band]), "dense",
                              V[:, : min(10, n)], tuple(float(x) for x in mu[:10]))
    if method != "sturm":
        raise ValueError(f"unknown method {method!r}")
    scale = _scale_estimate(H, B)
    ztol = ZTOL_REL * scale if ztol is None else float(ztol)
    cutoff = ztol if cutoff is None else float(cutoff)
    num_neg = block_sturm_count(H, B, -ztol)
    num_band = block_sturm_count(H, B, ztol) - num_neg
    k = min(num_neg + num_band + 2, 10, n - 1)
    mu, V = _lowest_pairs(H, B, k, scale)
    band = np.abs(mu) <= ztol
    if num_band:
        warnings.warn(f"{num_band} eigenvalue(s) inside the zero band", stacklevel=2)
    return SpectralReport(num_neg, tuple(float(x) for x in mu[mu < cutoff]), cutoff, grid_M,
                          ztol, tuple(float(x) for x in mu[band]), "sturm", V,
                          tuple(float(x) for x in mu))


def _lowest_pairs(H, B, k, scale):
    """Lowest ``k`` pairs by shift-invert around a Sturm-certified lower bound."""
    lo = -scale
    while block_sturm_count(H, B, lo) > 0:
        lo *= 2.0
    from scipy.sparse import dia_matrix

    def to_sparse(A):
        u = A.bandwidth
        data, offs = [], []
        for kk in range(u + 1):
            row = A.ab[u - kk]
            data.append(row)
            offs.append(kk)
            if kk:
                data.append(np.concatenate([row[kk:], np.zeros(kk)]))
                offs.append(-kk)
        return dia_matrix((np.array(data), offs), shape=(A.n, A.n)).tocsc()

    try:
        mu, V = eigsh(to_sparse(H), k=k, M=to_sparse(B), sigma=lo, which="LM")
    except ArpackError as exc:
        raise EigenSolveFailure(str(exc)) from exc
    order = np.argsort(mu)
    return mu[order], V[:, order]


def morse_index(sys, path, eps: float = 0.0, ztol: float | None = None,
                gram: str = "h1", method: str = "auto",
                cutoff: float | None = None) -> SpectralReport:
    """Morse index of the discrete action at ``path`` in the centered space."""
    P = center_basis(sys)
    H = assemble_hessian(sys, path, eps, basis=P)
    B = _gram(path, P.shape[1], gram)
    return spectral_report(H, B, path.M, ztol, cutoff, method)


def eigen_residuals(H: BandedHessian, B: BandedHessian, report: SpectralReport) -> np.ndarray:
    """``|H v - mu B v| / |v|`` for the reported low modes."""
    V = report.eigenvectors
    if V is None:
        return np.zeros(0)
    allmu = report.mode_eigenvalues
    out = []
    for j in range(V.shape[1]):
        v = V[:, j]
        r = H.matvec(v) - allmu[j] * B.matvec(v)
        out.append(np.linalg.norm(r) / np.linalg.norm(v))
    return np.asarray(out)


def negative_count_stability(sys, path, eps: float, grids, refine: bool = False,
                             tol: float = 1e-8, **kwargs) -> list:
    """Morse index after resampling ``path`` to each uniform grid size.

    A resampled critical point is no longer critical on the new grid; with
    ``refine`` it is first re-converged by Newton, so the counts compare
    critical points of the successive discretizations.
    """
    out = []
    for M in grids:
        p = resample(path, uniform_times(path.t1, path.t2, int(M)))
        if refine:
            from .critical import newton_refine
            from .action import action_value
            rec0 = _bare_record(sys, p, eps, action_value)
            p = newton_refine(sys, rec0, tol=tol).path
        out.append(morse_index(sys, p, eps, **kwargs).num_negative)
    return out


def _bare_record(sys, path, eps, action_value):
    from .critical import CriticalPointRecord
    return CriticalPointRecord(path, eps, action_value(sys, path, eps), float("nan"), -1, ())


def inertia_dense(A) -> tuple:
    """``(n_neg, n_zero, n_pos)`` from a symmetric LDL^T factorization."""
    _, D, _ = linalg.ldl(np.asarray(A, dtype=float))
    w = []
    i = 0
    n = len(D)
    while i < n:
        if i + 1 < n and D[i + 1, i] != 0.0:
            w.extend(linalg.eigvalsh(D[i:i + 2, i:i + 2]))
            i += 2
        else:
            w.append(D[i, i])
            i += 1
    w = np.asarray(w)
    return int((w < 0).sum()), int((w == 0).sum()), int((w > 0).sum())
