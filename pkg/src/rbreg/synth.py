"""Synthetic class-template feature generator for desk-scale experiments.

Each distance class gets a fixed random unit template; samples are scaled
and noise-perturbed copies with distances jittered inside the class bin.
Neighboring class templates are correlated (a random walk on the unit
sphere), mirroring how real backbone features drift smoothly with object
distance: appearance blurs gradually, it does not jump between bins.
Deterministic given the seed.
"""

import numpy as np

from .data import FeatureDataset, class_midpoint

DEFAULT_SCALE_JITTER = 0.2
DEFAULT_DISTANCE_JITTER = 0.5
DEFAULT_TEMPLATE_STEP = 0.45  # sin of the angle between adjacent templates


def _template_walk(rng, classes, d, step):
    """Unit templates with cos(angle) = sqrt(1 - step^2) between neighbors."""
    t = np.empty((classes, d))
    g = rng.standard_normal(d)
    t[0] = g / np.linalg.norm(g)
    keep = np.sqrt(1.0 - step * step)
    for c in range(1, classes):
        g = rng.standard_normal(d)
        g -= (g @ t[c - 1]) * t[c - 1]
        norm = np.linalg.norm(g)
        t[c] = keep * t[c - 1] + (step / norm) * g if norm > 0 else t[c - 1]
    return t


def synth_generate(classes, per_class_dict, n_train, n_test, d, noise_sigma,
                   seed, range_min=0.5, bin_width=1.0,
                   scale_jitter=DEFAULT_SCALE_JITTER,
                   distance_jitter=DEFAULT_DISTANCE_JITTER,
                   template_step=DEFAULT_TEMPLATE_STEP,
                   backbone_tag="synthetic"):
    """Generate (dict_set, train_set, test_set) with per-class counts
    (per_class_dict, n_train, n_test).

    A sample of class c is t_c * (1 + eps) + noise_sigma * gaussian with
    eps uniform in +-scale_jitter, and its distance is the bin midpoint
    plus a uniform draw in +-distance_jitter. template_step=1 makes the
    class templates mutually orthogonal in expectation (no distance
    structure); smaller values correlate neighboring classes.
    """
    if d < classes:
        raise ValueError(f"d={d} must be >= classes={classes}")
    rng = np.random.default_rng(seed)
    templates = _template_walk(rng, classes, d, template_step)

    def draw(count, split_name):
        feats = np.empty((classes * count, d))
        dists = np.empty(classes * count)
        ids = []
        row = 0
        for c in range(classes):
            mid = class_midpoint(c, range_min, bin_width)
            for k in range(count):
                eps = rng.uniform(-scale_jitter, scale_jitter)
                noise = noise_sigma * rng.standard_normal(d)
                feats[row] = templates[c] * (1.0 + eps) + noise
                jitter = rng.uniform(-distance_jitter, distance_jitter)
                # keep distances strictly inside the bin (and positive)
                dists[row] = mid + np.clip(jitter, -bin_width / 2 + 1e-9,
                                           bin_width / 2 - 1e-9)
                ids.append(f"{split_name}:{c}:{k}")
                row += 1
        return FeatureDataset(feats, dists, ids, backbone_tag)

    return draw(per_class_dict, "dict"), draw(n_train, "train"), draw(n_test, "test")
