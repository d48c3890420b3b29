"""Dense symmetric-matrix helpers: PSD factorisation, Loewner order, Kronecker
product and Gram-matrix equality.

Tolerances are relative to ``scale = trace / dim`` so that every check is
invariant under rescaling of its inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NotPSDError

CHOLESKY = "cholesky"
SYM_SQRT = "symmetric-sqrt"


@dataclass(frozen=True)
class SymFactor:
    matrix_dim: int
    factor: np.ndarray
    method: str
    reconstruction_error: float


def _as_square(a, name="matrix") -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a


def psd_scale(a: np.ndarray) -> float:
    return abs(float(np.trace(a))) / a.shape[0] if a.size else 0.0


def min_eigenvalue(a: np.ndarray) -> float:
    a = _as_square(a)
    if a.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(0.5 * (a + a.T))[0])


def factor_psd(sigma, tol: float = 1e-10) -> SymFactor:
    """Factor ``sigma = L L^T``.

    Cholesky is tried first; a non-positive pivot (or a factor that does not
    reproduce ``sigma``) switches to the symmetric PSD square root computed by
    eigendecomposition with negative eigenvalues clipped to zero.
    """
    sigma = _as_square(sigma, "sigma")
    d = sigma.shape[0]
    scale = psd_scale(sigma)
    if not np.allclose(sigma, sigma.T, rtol=0.0, atol=tol * max(scale, np.finfo(float).tiny)):
        raise NotPSDError("matrix is not symmetric to tolerance")
    sym = 0.5 * (sigma + sigma.T)
    norm = np.linalg.norm(sym)
    budget = 1e-8 * (1.0 + norm)
    try:
        L = np.linalg.cholesky(sym)
        err = float(np.linalg.norm(L @ L.T - sym))
        if np.all(np.isfinite(L)) and err <= budget:
            return SymFactor(d, L, CHOLESKY, err)
    except np.linalg.LinAlgError:
        pass
    vals, vecs = np.linalg.eigh(sym)
    if d and vals[0] < -tol * scale:
        raise NotPSDError(f"minimum eigenvalue {vals[0]:.3e} below -tol*scale = {-tol * scale:.3e}")
    root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
    root = 0.5 * (root + root.T)
    err = float(np.linalg.norm(root @ root.T - sym))
    return SymFactor(d, root, SYM_SQRT, err)


def loewner_leq(S, U, tol: float = 1e-10) -> bool:
    """True iff ``U - S`` is positive semidefinite up to ``tol * scale``."""
    S = _as_square(S, "S")
    U = _as_square(U, "U")
    if S.shape != U.shape:
        raise DimensionError(f"shape mismatch {S.shape} vs {U.shape}")
    scale = 0.5 * (psd_scale(S) + psd_scale(U))
    return loewner_gap(S, U) >= -tol * scale


def loewner_gap(S, U) -> float:
    """Smallest eigenvalue of ``U - S`` (negative means S <= U fails)."""
    S = _as_square(S, "S")
    U = _as_square(U, "U")
    if S.shape != U.shape:
        raise DimensionError(f"shape mismatch {S.shape} vs {U.shape}")
    return min_eigenvalue(U - S)


def kron(A, B) -> np.ndarray:
    """Kronecker product ``[A_ij B]`` of two square matrices."""
    A = _as_square(A, "A")
    B = _as_square(B, "B")
    return np.kron(A, B)


def same_gram(A, B, tol: float = 1e-10) -> bool:
    """True iff ``A A^T == B B^T`` up to tolerance.

    Equivalently, ``A = B O`` for some orthogonal ``O``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    ga, gb = A @ A.T, B @ B.T
    scale = 0.5 * (psd_scale(ga) + psd_scale(gb))
    return float(np.linalg.norm(ga - gb)) <= tol * max(scale, np.finfo(float).tiny)


def sym_sqrt(a) -> np.ndarray:
    """Symmetric PSD square root (negative eigenvalues clipped)."""
    a = _as_square(a)
    vals, vecs = np.linalg.eigh(0.5 * (a + a.T))
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T
