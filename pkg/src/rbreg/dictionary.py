"""Representative dictionary construction: PCA compression of backbone
features, unit-norm atom matrix D grouped by quantized distance class,
the regularized least-squares denoiser B = (D^T D + lambda I)^-1 D^T, and
the 2-D grid layout that places each class's atoms inside one pooling
window.

Bundle file layout RBD1 (little-endian, row-major):
    "RBD1" | u32 m,n,C,P,H,W,h,w | f64 lambda
    | f64 mean[d] | f64 A[m x d] | f64 D[m x n] | f64 B[n x m]
(d is recovered from the file size: remaining = d*(1+m) + 2*m*n doubles.)
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    RankDeficient,
    ShapeMismatch,
    TruncatedFile,
    ZeroNormAtom,
    ZeroNormQuery,
)
from .linalg import eig_sym_descending, solve_spd

BUNDLE_MAGIC = b"RBD1"

DEFAULT_CR = 0.5
DEFAULT_LAMBDA = 1e-2


@dataclass(frozen=True)
class GridLayout:
    grid_rows: int      # H
    grid_cols: int      # W
    block_rows: int     # h
    block_cols: int     # w
    blocks_per_row: int

    @property
    def cells(self):
        return self.grid_rows * self.grid_cols

    @property
    def block_cells(self):
        return self.block_rows * self.block_cols


def _most_square_factors(p):
    """Factor pair (h, w) of p with h <= w and w - h minimal."""
    best = (1, p)
    for h in range(1, int(np.sqrt(p)) + 1):
        if p % h == 0:
            best = (h, p // h)
    return best


def grid_layout_for(classes, per_class):
    """Derive the grid placing each class's atoms in one pooling block.

    Block (h, w) is the most-square factor pair of per_class. The number
    of blocks per grid row is the divisor of `classes` nearest to
    classes/per_class (ties toward the smaller divisor), which arranges
    the reference configuration of 60 classes x 20 atoms as an 80 x 15
    grid of 4 x 5 blocks, three blocks per row.
    """
    h, w = _most_square_factors(per_class)
    target = classes / per_class
    divisors = [g for g in range(1, classes + 1) if classes % g == 0]
    g = min(divisors, key=lambda x: (abs(x - target), x))
    return GridLayout(
        grid_rows=(classes // g) * h,
        grid_cols=g * w,
        block_rows=h,
        block_cols=w,
        blocks_per_row=g,
    )


def column_to_cell(layout, j):
    """Grid cell (row, col) of dictionary column j; bijective over [0, n)."""
    p = layout.block_cells
    k, within = divmod(j, p)
    block_row, block_col = divmod(k, layout.blocks_per_row)
    r, c = divmod(within, layout.block_cols)
    return (block_row * layout.block_rows + r,
            block_col * layout.block_cols + c)


@dataclass
class Dictionary:
    atoms: np.ndarray           # D, m x n, unit-norm columns
    compression: np.ndarray     # A, m x d
    lam: float
    classes: int                # C
    per_class: int              # P; 0 when class sizes are non-uniform
    class_of_column: np.ndarray
    feature_mean: np.ndarray    # length d

    @property
    def m(self):
        return self.atoms.shape[0]

    @property
    def n(self):
        return self.atoms.shape[1]

    @property
    def d(self):
        return self.compression.shape[1]

    def compress(self, feature):
        """Project a raw feature to the compressed space and normalize."""
        feature = np.asarray(feature, dtype=np.float64)
        if feature.shape != (self.d,):
            raise ShapeMismatch(f"feature length {feature.shape} != ({self.d},)")
        y = self.compression @ (feature - self.feature_mean)
        norm = np.linalg.norm(y)
        if norm == 0.0:
            raise ZeroNormQuery("compressed query has zero norm")
        return y / norm

    def compress_batch(self, features):
        y = (np.asarray(features, dtype=np.float64) - self.feature_mean) @ self.compression.T
        norms = np.linalg.norm(y, axis=1)
        if np.any(norms == 0.0):
            raise ZeroNormQuery("compressed query has zero norm")
        return y / norms[:, None]


@dataclass
class DenoiserMap:
    B: np.ndarray   # n x m
    lam: float
    _proxy_scale: float = None  # lazy; see proxy_scale()


def proxy_scale(dictionary, dm):
    """Standard deviation of the dictionary atoms' own proxy coefficients.

    Unit-norm queries give proxies with entries around 1e-2, far too small
    a working scale for gradient training of the regressor stack; network
    inputs are divided by this scalar so they enter the first convolution
    with unit variance. Deterministic given the bundle, cached on the
    denoiser.
    """
    if dm._proxy_scale is None:
        dm._proxy_scale = float((dm.B @ dictionary.atoms).std())
    return dm._proxy_scale


def fit_pca(dict_samples, m=None, cr=DEFAULT_CR):
    """Top-m principal directions of the dictionary samples.

    Returns (A, mean) where the rows of A (m x d) are orthonormal
    directions sorted by decreasing variance; mean is the centering
    vector to subtract at query time. When the sample count is below the
    feature dimension the eigenproblem is solved on the n x n Gram matrix
    and mapped back. m defaults to round(cr * d).
    """
    x = dict_samples.features
    n, d = x.shape
    if n < 2:
        raise RankDeficient("need at least 2 samples for PCA")
    if m is None:
        m = int(round(cr * d))
    if m > min(d, n):
        raise RankDeficient(f"m={m} exceeds min(d={d}, samples={n})")
    mean = x.mean(axis=0)
    xc = x - mean

    if n < d:
        evals, u = eig_sym_descending(xc @ xc.T)
        positive = evals > 1e-10 * max(evals[0], 0.0)
        if np.count_nonzero(positive) < m:
            raise RankDeficient(
                f"only {np.count_nonzero(positive)} positive eigenvalues, need {m}"
            )
        a = (xc.T @ u[:, :m]).T
        a /= np.linalg.norm(a, axis=1)[:, None]
    else:
        evals, v = eig_sym_descending(xc.T @ xc)
        positive = evals > 1e-10 * max(evals[0], 0.0)
        if np.count_nonzero(positive) < m:
            raise RankDeficient(
                f"only {np.count_nonzero(positive)} positive eigenvalues, need {m}"
            )
        a = v[:, :m].T.copy()
    # deterministic sign: each direction's largest-magnitude entry positive
    for i in range(a.shape[0]):
        if a[i, np.argmax(np.abs(a[i]))] < 0:
            a[i] = -a[i]
    return a, mean


def _compress_columns(a, mean, features):
    cols = a @ (features - mean).T
    norms = np.linalg.norm(cols, axis=0)
    if np.any(norms == 0.0):
        raise ZeroNormAtom(f"{int(np.sum(norms == 0.0))} zero-norm atoms")
    return cols / norms


def build_denoiser(d_mat, lam):
    """B = (D^T D + lambda I)^-1 D^T via the SPD solver."""
    n = d_mat.shape[1]
    gram = d_mat.T @ d_mat + lam * np.eye(n)
    return DenoiserMap(B=solve_spd(gram, d_mat.T), lam=lam)


def build_dictionary(dict_set, a, mean, lam, classes):
    """Build (Dictionary, DenoiserMap, GridLayout) from a class-uniform
    dictionary split (columns already ordered by ascending class)."""
    n = len(dict_set)
    if n % classes != 0:
        raise ShapeMismatch(f"{n} atoms not uniform over {classes} classes")
    per_class = n // classes
    d_mat = _compress_columns(a, mean, dict_set.features)
    dictionary = Dictionary(
        atoms=d_mat,
        compression=a,
        lam=lam,
        classes=classes,
        per_class=per_class,
        class_of_column=np.repeat(np.arange(classes), per_class),
        feature_mean=mean,
    )
    dm = build_denoiser(d_mat, lam)
    layout = grid_layout_for(classes, per_class)
    return dictionary, dm, layout


def build_crc_dictionary(datasets, a, mean, lam, range_min, range_max, bin_width=1.0):
    """Dictionary + denoiser over the union of several splits, columns
    sorted by quantized class; class sizes need not be uniform (no grid
    layout). Used by the full-CRC baseline."""
    from .data import num_classes, quantize_distance

    feats = np.concatenate([ds.features for ds in datasets])
    dists = np.concatenate([ds.distances for ds in datasets])
    labels = np.array([
        quantize_distance(t, range_min, range_max, bin_width) for t in dists
    ])
    order = np.argsort(labels, kind="stable")
    d_mat = _compress_columns(a, mean, feats[order])
    dictionary = Dictionary(
        atoms=d_mat,
        compression=a,
        lam=lam,
        classes=num_classes(range_min, range_max, bin_width),
        per_class=0,
        class_of_column=labels[order],
        feature_mean=mean,
    )
    return dictionary, build_denoiser(d_mat, lam)


def proxy(dm, dictionary, feature, mode="lmmse"):
    """Coarse coefficient estimate for a raw feature: B y (lmmse) or
    D^T y (mc), with y the compressed unit-norm query."""
    y = dictionary.compress(feature)
    if mode == "lmmse":
        return dm.B @ y
    if mode == "mc":
        return dictionary.atoms.T @ y
    raise ValueError(f"unknown proxy mode {mode!r}")


def save_bundle(path, dictionary, dm, layout):
    with open(path, "wb") as fh:
        fh.write(BUNDLE_MAGIC)
        fh.write(struct.pack(
            "<8I",
            dictionary.m, dictionary.n, dictionary.classes, dictionary.per_class,
            layout.grid_rows, layout.grid_cols,
            layout.block_rows, layout.block_cols,
        ))
        fh.write(struct.pack("<d", dictionary.lam))
        fh.write(dictionary.feature_mean.tobytes())
        fh.write(np.ascontiguousarray(dictionary.compression).tobytes())
        fh.write(np.ascontiguousarray(dictionary.atoms).tobytes())
        fh.write(np.ascontiguousarray(dm.B).tobytes())


def load_bundle(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != BUNDLE_MAGIC:
        raise BadMagic(f"{path}: expected {BUNDLE_MAGIC!r}, got {blob[:4]!r}")
    if len(blob) < 4 + 32 + 8:
        raise TruncatedFile(f"{path}: header truncated")
    m, n, c, p, grid_h, grid_w, block_h, block_w = struct.unpack_from("<8I", blob, 4)
    (lam,) = struct.unpack_from("<d", blob, 36)
    payload = len(blob) - 44
    if payload % 8 != 0:
        raise TruncatedFile(f"{path}: payload not a whole number of doubles")
    n_doubles = payload // 8
    rem = n_doubles - 2 * m * n
    if rem <= 0 or rem % (1 + m) != 0:
        raise TruncatedFile(f"{path}: size inconsistent with header")
    d = rem // (1 + m)
    vals = np.frombuffer(blob, dtype="<f8", offset=44)
    off = 0
    mean = vals[off:off + d].copy(); off += d
    a = vals[off:off + m * d].reshape(m, d).copy(); off += m * d
    atoms = vals[off:off + m * n].reshape(m, n).copy(); off += m * n
    b = vals[off:off + n * m].reshape(n, m).copy()
    dictionary = Dictionary(
        atoms=atoms, compression=a, lam=lam, classes=c, per_class=p,
        class_of_column=(np.repeat(np.arange(c), p) if p else np.zeros(n, dtype=int)),
        feature_mean=mean,
    )
    layout = GridLayout(grid_h, grid_w, block_h, block_w,
                        grid_w // block_w if block_w else 1)
    return dictionary, DenoiserMap(B=b, lam=lam), layout
