"""Classical representation-based estimators over a compressed dictionary:
the regularized least-squares closed form, l1 solvers (ISTA/FISTA, OMP,
ADMM), and the four-step residual classifier mapping a query feature to a
quantized distance.

The l1 objective is F(x) = ||Dx - y||_2^2 + lambda ||x||_1 (no 1/2 on the
quadratic), so the proximal threshold is lambda/(2L) with L the largest
eigenvalue of D^T D.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import class_midpoint
from .dictionary import Dictionary
from .errors import NotPositiveDefinite, ShapeMismatch
from .linalg import cholesky_spd, solve_cholesky, solve_spd, spectral_norm_sq


class Method(str, Enum):
    CRC = "crc"
    FISTA = "fista"
    ISTA = "ista"
    OMP = "omp"
    ADMM = "admm"


@dataclass
class SolverConfig:
    method: Method = Method.CRC
    lam: float = 1e-2
    max_iter: int = 1000
    tol: float = 1e-6
    omp_k: int = 20
    admm_rho: float = 1.0

    def __post_init__(self):
        self.method = Method(self.method)
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")


@dataclass
class ClassificationResult:
    coefficients: np.ndarray
    residuals: np.ndarray
    predicted_class: int
    predicted_distance: float


def _atoms(dict_or_matrix):
    if isinstance(dict_or_matrix, Dictionary):
        return dict_or_matrix.atoms
    return np.asarray(dict_or_matrix, dtype=np.float64)


def lasso_objective(d_mat, y, lam, x):
    r = d_mat @ x - y
    return float(r @ r + lam * np.sum(np.abs(x)))


def soft_threshold(x, thr):
    return np.sign(x) * np.maximum(np.abs(x) - thr, 0.0)


def crc_solve(dictionary, y, dm=None):
    """x = (D^T D + lambda I)^-1 D^T y; reuses a precomputed DenoiserMap
    when one is supplied (bitwise-identical to the proxy in that case)."""
    d_mat = _atoms(dictionary)
    if dm is not None:
        return dm.B @ y
    lam = dictionary.lam if isinstance(dictionary, Dictionary) else 0.0
    n = d_mat.shape[1]
    gram = d_mat.T @ d_mat + lam * np.eye(n)
    try:
        return solve_spd(gram, d_mat.T @ y)
    except NotPositiveDefinite:
        raise


def lasso_ista(dictionary, y, cfg, return_trace=False):
    """Proximal gradient descent on F(x); objective is non-increasing."""
    return _prox_gradient(dictionary, y, cfg, momentum=False,
                          return_trace=return_trace)


def lasso_fista(dictionary, y, cfg, return_trace=False):
    """Accelerated proximal gradient descent on F(x)."""
    return _prox_gradient(dictionary, y, cfg, momentum=True,
                          return_trace=return_trace)


def _prox_gradient(dictionary, y, cfg, momentum, return_trace):
    d_mat = _atoms(dictionary)
    n = d_mat.shape[1]
    lip = spectral_norm_sq(d_mat, tol=1e-9)
    if lip == 0.0:
        x = np.zeros(n)
        return (x, [lasso_objective(d_mat, y, cfg.lam, x)]) if return_trace else x
    step = 1.0 / lip              # multiplies the half-gradient D^T(Dx - y)
    thr = cfg.lam / (2.0 * lip)   # consistent with the unhalved objective

    x = np.zeros(n)
    z = x
    t = 1.0
    obj = lasso_objective(d_mat, y, cfg.lam, x)
    trace = [obj]
    best_x, best_obj = x, obj
    for _ in range(cfg.max_iter):
        grad_half = d_mat.T @ (d_mat @ z - y)
        x_next = soft_threshold(z - step * grad_half, thr)
        if momentum:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            z = x_next + ((t - 1.0) / t_next) * (x_next - x)
            t = t_next
        else:
            z = x_next
        obj_next = lasso_objective(d_mat, y, cfg.lam, x_next)
        trace.append(obj_next)
        if obj_next < best_obj:
            best_x, best_obj = x_next, obj_next
        rel = abs(obj - obj_next) / max(abs(obj), 1e-300)
        x, obj = x_next, obj_next
        if rel < cfg.tol:
            break
    return (best_x, trace) if return_trace else best_x


def omp(dictionary, y, cfg):
    """Orthogonal matching pursuit: greedy max-correlation selection with a
    least-squares refit on the active set each step."""
    d_mat = _atoms(dictionary)
    m, n = d_mat.shape
    if cfg.omp_k > m:
        raise ShapeMismatch(f"omp_k={cfg.omp_k} exceeds measurement dim {m}")
    x = np.zeros(n)
    residual = y.copy()
    active = []
    for _ in range(cfg.omp_k):
        if np.linalg.norm(residual) < cfg.tol:
            break
        corr = np.abs(d_mat.T @ residual)
        corr[active] = -np.inf
        j = int(np.argmax(corr))
        active.append(j)
        sub = d_mat[:, active]
        coef = solve_spd(sub.T @ sub, sub.T @ y)
        residual = y - sub @ coef
    x[active] = coef if active else 0.0
    return x


def lasso_admm(dictionary, y, cfg):
    """ADMM x-z splitting for F(x); returns the z iterate."""
    d_mat = _atoms(dictionary)
    n = d_mat.shape[1]
    rho = cfg.admm_rho
    chol = cholesky_spd(2.0 * (d_mat.T @ d_mat) + rho * np.eye(n))
    dty2 = 2.0 * (d_mat.T @ y)
    z = np.zeros(n)
    u = np.zeros(n)
    for _ in range(cfg.max_iter):
        x = solve_cholesky(chol, dty2 + rho * (z - u))
        z_prev = z
        z = soft_threshold(x + u, cfg.lam / rho)
        u = u + x - z
        primal = np.linalg.norm(x - z)
        dual = rho * np.linalg.norm(z - z_prev)
        if primal < cfg.tol and dual < cfg.tol:
            break
    return z


_SOLVERS = {
    Method.CRC: lambda dct, y, cfg, dm: crc_solve(dct, y, dm),
    Method.FISTA: lambda dct, y, cfg, dm: lasso_fista(dct, y, cfg),
    Method.ISTA: lambda dct, y, cfg, dm: lasso_ista(dct, y, cfg),
    Method.OMP: lambda dct, y, cfg, dm: omp(dct, y, cfg),
    Method.ADMM: lambda dct, y, cfg, dm: lasso_admm(dct, y, cfg),
}


def class_residuals(dictionary, y, x):
    """Per-class representation residuals e_i = ||y - D_i x_i||_2."""
    labels = dictionary.class_of_column
    residuals = np.empty(dictionary.classes)
    for c in range(dictionary.classes):
        cols = labels == c
        residuals[c] = np.linalg.norm(y - dictionary.atoms[:, cols] @ x[cols])
    return residuals


def classify_four_step(dictionary, feature, cfg, dm=None,
                       range_min=0.5, bin_width=1.0):
    """Compress and normalize the query, solve for coefficients with the
    configured method, compute per-class residuals, and return the argmin
    class with its mid-bin distance (ties resolve to the lowest class)."""
    y = dictionary.compress(feature)
    solver = _SOLVERS[Method(cfg.method)]
    x = solver(dictionary, y, cfg, dm)
    residuals = class_residuals(dictionary, y, x)
    predicted = int(np.argmin(residuals))
    return ClassificationResult(
        coefficients=x,
        residuals=residuals,
        predicted_class=predicted,
        predicted_distance=class_midpoint(predicted, range_min, bin_width),
    )


def classify_batch_crc(dictionary, dm, features, range_min=0.5, bin_width=1.0):
    """Vectorized four-step CRC classification over many raw features."""
    y = dictionary.compress_batch(features)          # (N, m)
    x = y @ dm.B.T                                   # (N, n)
    labels = dictionary.class_of_column
    n_q = y.shape[0]
    residuals = np.empty((n_q, dictionary.classes))
    for c in range(dictionary.classes):
        cols = labels == c
        recon = x[:, cols] @ dictionary.atoms[:, cols].T
        residuals[:, c] = np.linalg.norm(y - recon, axis=1)
    predicted = residuals.argmin(axis=1)
    distances = class_midpoint(predicted.astype(np.float64), range_min, bin_width)
    return predicted, distances, residuals
