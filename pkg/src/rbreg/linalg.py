"""Dense linear-algebra kernels used by the dictionary, solver and network
modules: SPD solves, symmetric eigendecomposition, spectral-norm estimation.

All routines take and return float64 C-contiguous ndarrays and are pure
functions of their inputs: identical inputs give bit-identical outputs.
"""

import numpy as np
import scipy.linalg

from .errors import NoConvergence, NotPositiveDefinite, ShapeMismatch

# relative pivot floor; one jitter retry of +JITTER*trace/n is attempted
# before giving up
PIVOT_RTOL = 1e-12
JITTER_RTOL = 1e-10


def _as_matrix(a):
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeMismatch(f"expected 2-D array, got shape {a.shape}")
    return m


def _cholesky_checked(m, pivot_floor):
    """Cholesky factor of m, or None when a pivot falls at/below the floor."""
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return None
    # LAPACK only fails on pivots <= 0; enforce the relative floor too
    if np.min(np.diag(chol)) ** 2 <= pivot_floor:
        return None
    return chol


def cholesky_spd(m):
    """Lower-triangular Cholesky factor of a symmetric positive-definite
    matrix, with one automatic diagonal-jitter retry before raising
    NotPositiveDefinite."""
    m = _as_matrix(m)
    n = m.shape[0]
    if m.shape[1] != n:
        raise ShapeMismatch(f"matrix not square: {m.shape}")
    scale = np.trace(m) / n if n else 0.0
    pivot_floor = PIVOT_RTOL * scale
    chol = _cholesky_checked(m, pivot_floor)
    if chol is None:
        jitter = JITTER_RTOL * scale
        chol = _cholesky_checked(m + jitter * np.eye(n), pivot_floor)
        if chol is None:
            raise NotPositiveDefinite(
                f"pivot <= {pivot_floor:.3e} after jitter retry"
            )
    return chol


def solve_cholesky(chol, rhs):
    """Solve M X = rhs given the lower Cholesky factor of M."""
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    vector_rhs = rhs.ndim == 1
    if vector_rhs:
        rhs = rhs[:, None]
    if rhs.shape[0] != chol.shape[0]:
        raise ShapeMismatch(f"rhs rows {rhs.shape[0]} != {chol.shape[0]}")
    x = scipy.linalg.solve_triangular(chol, rhs, lower=True)
    x = scipy.linalg.solve_triangular(chol.T, x, lower=False)
    return x[:, 0] if vector_rhs else x


def solve_spd(m, rhs):
    """Solve M X = rhs for symmetric positive-definite M via Cholesky."""
    return solve_cholesky(cholesky_spd(m), rhs)


def eig_sym_descending(m):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Eigenvector columns are orthonormal; each column's largest-magnitude
    entry is made positive (first such index on ties) so the decomposition
    is deterministic.
    """
    m = _as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise ShapeMismatch(f"matrix not square: {m.shape}")
    try:
        evals, evecs = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    evals = evals[::-1].copy()
    evecs = evecs[:, ::-1].copy()
    for j in range(evecs.shape[1]):
        col = evecs[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            evecs[:, j] = -col
    return evals, evecs


def spectral_norm_sq(d, tol=1e-6, max_iter=1000):
    """Largest eigenvalue of D^T D by power iteration on the Gram matrix.

    Stops when the Rayleigh quotient's relative change drops below tol.
    An all-zero D returns 0.0.
    """
    d = _as_matrix(d)
    gram = d.T @ d
    n = gram.shape[0]
    v = np.full(n, 1.0 / np.sqrt(n))
    lam = 0.0
    for _ in range(max_iter):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v_next = w / norm
        lam_next = float(v_next @ (gram @ v_next))
        if abs(lam_next - lam) <= tol * max(abs(lam_next), 1e-300):
            return lam_next
        v, lam = v_next, lam_next
    return lam
