"""Input validation helpers shared across modules.

These mirror the ``check_*`` helpers of scikit-learn: each takes raw user
input, coerces it to the canonical numpy form and raises ``ValueError``
subclasses with a readable message when the input is unusable.
"""
import numbers

import numpy as np

from .exceptions import DomainError, GridMismatch

DISTANCE_FLOOR = 1e-14


def check_alpha(alpha):
    if not isinstance(alpha, numbers.Real) or not 0.0 < float(alpha) < 2.0:
        raise DomainError(f"alpha must lie in (0, 2), got {alpha!r}")
    return float(alpha)


def check_lambda(lam, allow_inf=False):
    lam = float(lam)
    if np.isnan(lam) or lam < 0.0 or (np.isinf(lam) and not allow_inf):
        raise DomainError(f"lambda must be a finite non-negative real, got {lam!r}")
    return lam


def check_eps(eps):
    eps = float(eps)
    if not np.isfinite(eps) or eps < 0.0:
        raise ValueError(f"eps must be a finite non-negative real, got {eps!r}")
    return eps


def check_configuration(sys, q, name="q"):
    """Return ``q`` as a float array of shape ``(N, d)`` matching ``sys``."""
    arr = np.asarray(q, dtype=float)
    if arr.ndim == 1 and arr.size == sys.N * sys.d:
        arr = arr.reshape(sys.N, sys.d)
    if arr.shape != (sys.N, sys.d):
        raise ValueError(
            f"{name} must have shape ({sys.N}, {sys.d}), got {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_nodes(sys, nodes, name="nodes"):
    """Return ``nodes`` as a float array of shape ``(M, N, d)``."""
    arr = np.asarray(nodes, dtype=float)
    if arr.ndim != 3 or arr.shape[1:] != (sys.N, sys.d):
        raise ValueError(
            f"{name} must have shape (M, {sys.N}, {sys.d}), got {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_same_grid(a, b):
    """Raise ``GridMismatch`` unless the two arrays share the path node shape."""
    if np.shape(a) != np.shape(b):
        raise GridMismatch(f"grid mismatch: {np.shape(a)} vs {np.shape(b)}")


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("a seed is required for stochastic steps")
    return np.random.default_rng(seed)
