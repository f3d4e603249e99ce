"""Labeled feature-vector datasets: the RBF1 file format, distance
quantization, and deterministic dictionary/train/validation/test splits.

RBF1 layout (little-endian):
    "RBF1" | u32 version=1 | u32 d | u64 record count N
    | 32-byte zero-padded UTF-8 backbone tag
    | N x [f32 features[d] | f64 distance_m | u32 id_len | id bytes]

Features are stored as 32-bit floats and upcast to float64 on load.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    InsufficientClassSamples,
    NonFiniteValue,
    OutOfRange,
    TruncatedFile,
)

MAGIC = b"RBF1"
VERSION = 1
TAG_BYTES = 32


@dataclass
class FeatureRecord:
    features: np.ndarray  # length-d float64
    distance: float       # meters, > 0
    source_id: str


class FeatureDataset:
    """Ordered collection of feature vectors with distances, stored as
    contiguous arrays (features N x d, distances N)."""

    def __init__(self, features, distances, source_ids, backbone_tag=""):
        features = np.ascontiguousarray(features, dtype=np.float64)
        distances = np.ascontiguousarray(distances, dtype=np.float64)
        if features.ndim != 2:
            raise DimensionMismatch(f"features must be N x d, got {features.shape}")
        if len(distances) != features.shape[0] or len(source_ids) != features.shape[0]:
            raise DimensionMismatch("features/distances/source_ids length mismatch")
        if not np.all(np.isfinite(features)):
            raise NonFiniteValue("non-finite feature value")
        if not np.all(np.isfinite(distances)) or np.any(distances <= 0):
            raise NonFiniteValue("distances must be finite and > 0")
        self.features = features
        self.distances = distances
        self.source_ids = list(source_ids)
        self.backbone_tag = backbone_tag

    @property
    def d(self):
        return self.features.shape[1]

    def __len__(self):
        return self.features.shape[0]

    def record(self, i):
        return FeatureRecord(self.features[i], float(self.distances[i]), self.source_ids[i])

    def __iter__(self):
        return (self.record(i) for i in range(len(self)))

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.intp)
        return FeatureDataset(
            self.features[indices],
            self.distances[indices],
            [self.source_ids[i] for i in indices],
            self.backbone_tag,
        )

    @classmethod
    def from_records(cls, records, backbone_tag=""):
        feats = np.stack([r.features for r in records]) if records else np.zeros((0, 0))
        dists = np.array([r.distance for r in records], dtype=np.float64)
        ids = [r.source_id for r in records]
        return cls(feats, dists, ids, backbone_tag)


@dataclass
class SplitSpec:
    seed: int = 0
    dict_per_class: int = 20
    train_fraction: float = 0.5
    val_fraction_of_train: float = 0.20
    range_min: float = 0.5
    range_max: float = 60.5
    bin_width: float = 1.0
    with_replacement: bool = False

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError("train_fraction must be in (0, 1)")
        if not (0.0 < self.val_fraction_of_train < 1.0):
            raise ValueError("val_fraction_of_train must be in (0, 1)")
        if self.range_min >= self.range_max:
            raise ValueError("range_min must be < range_max")


def num_classes(range_min, range_max, bin_width=1.0):
    return int(round((range_max - range_min) / bin_width))


def quantize_distance(d, range_min, range_max, bin_width=1.0):
    """Map a distance in meters to its class index.

    Class c covers [range_min + c*bin_width, range_min + (c+1)*bin_width),
    with the top edge clamped into the last class.
    """
    if not (range_min <= d <= range_max):
        raise OutOfRange(f"distance {d} outside [{range_min}, {range_max}]")
    c = int(np.floor((d - range_min) / bin_width))
    return min(max(c, 0), num_classes(range_min, range_max, bin_width) - 1)


def class_midpoint(c, range_min, bin_width=1.0):
    """Nominal distance of class c (the bin midpoint)."""
    return range_min + c * bin_width + bin_width / 2.0


def write_features(ds, path):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQ", VERSION, ds.d, len(ds)))
        tag = ds.backbone_tag.encode("utf-8")[:TAG_BYTES]
        fh.write(tag.ljust(TAG_BYTES, b"\x00"))
        feats32 = ds.features.astype(np.float32)
        for i in range(len(ds)):
            fh.write(feats32[i].tobytes())
            sid = ds.source_ids[i].encode("utf-8")
            fh.write(struct.pack("<dI", ds.distances[i], len(sid)))
            fh.write(sid)


def read_features(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise BadMagic(f"{path}: expected {MAGIC!r}, got {blob[:4]!r}")
    header_end = 4 + 16 + TAG_BYTES
    if len(blob) < header_end:
        raise TruncatedFile(f"{path}: header truncated")
    version, d, count = struct.unpack_from("<IIQ", blob, 4)
    if version != VERSION:
        raise BadMagic(f"{path}: unsupported version {version}")
    tag = blob[20:20 + TAG_BYTES].rstrip(b"\x00").decode("utf-8")

    feats = np.empty((count, d), dtype=np.float64)
    dists = np.empty(count, dtype=np.float64)
    ids = []
    off = header_end
    rec_fixed = 4 * d + 8 + 4
    for i in range(count):
        if off + rec_fixed > len(blob):
            raise TruncatedFile(f"{path}: record {i} truncated")
        feats[i] = np.frombuffer(blob, dtype="<f4", count=d, offset=off)
        off += 4 * d
        dist, id_len = struct.unpack_from("<dI", blob, off)
        off += 12
        if off + id_len > len(blob):
            raise TruncatedFile(f"{path}: record {i} id truncated")
        ids.append(blob[off:off + id_len].decode("utf-8"))
        off += id_len
        dists[i] = dist
    if off != len(blob):
        raise DimensionMismatch(f"{path}: {len(blob) - off} trailing bytes")
    return FeatureDataset(feats, dists, ids, tag)


def make_splits(ds, spec):
    """Partition a dataset into (dict_set, train_set, val_set, test_set).

    Records outside [range_min, range_max) are discarded. The dictionary
    set holds exactly dict_per_class records per class, ordered by
    ascending class then intra-class draw order. The remainder is shuffled
    once; train_fraction of it becomes the training pool, whose last
    val_fraction_of_train becomes validation. Identical (ds, spec) give
    identical splits.
    """
    rng = np.random.default_rng(spec.seed)
    dist = ds.distances
    in_range = np.flatnonzero((dist >= spec.range_min) & (dist < spec.range_max))
    C = num_classes(spec.range_min, spec.range_max, spec.bin_width)
    classes = np.floor((dist[in_range] - spec.range_min) / spec.bin_width).astype(np.intp)
    classes = np.minimum(classes, C - 1)

    dict_indices = []
    taken = np.zeros(len(ds), dtype=bool)
    for c in range(C):
        pool = in_range[classes == c]
        short = len(pool) < spec.dict_per_class
        if short and (not spec.with_replacement or len(pool) == 0):
            raise InsufficientClassSamples(c, len(pool), spec.dict_per_class)
        pick = rng.choice(len(pool), size=spec.dict_per_class, replace=short)
        chosen = pool[pick]
        dict_indices.extend(chosen.tolist())
        taken[chosen] = True

    rest = in_range[~taken[in_range]]
    perm = rng.permutation(len(rest))
    shuffled = rest[perm]
    n_train_pool = int(round(spec.train_fraction * len(shuffled)))
    train_pool = shuffled[:n_train_pool]
    test_idx = shuffled[n_train_pool:]
    n_val = int(round(spec.val_fraction_of_train * len(train_pool)))
    val_idx = train_pool[len(train_pool) - n_val:]
    train_idx = train_pool[:len(train_pool) - n_val]

    return (
        ds.subset(np.array(dict_indices, dtype=np.intp)),
        ds.subset(train_idx),
        ds.subset(val_idx),
        ds.subset(test_idx),
    )
