"""Compact convolutional regressors over reshaped proxy signals, in 2-D and
1-D variants, with hand-derived backpropagation and an Adam training loop.

The base regressor consumes the precomputed proxy x = B y reshaped onto the
dictionary grid: conv(5x5, 64, ReLU) -> max-pool(block) -> conv(5x5, 1,
ReLU) -> dense -> SoftPlus. The compressive-learning variant prepends a
trainable affine map m -> n initialized from B^T so the proxy stage is
optimized jointly. 1-D variants swap in length-25 kernels and pooling over
the per-class atom count, skipping the 2-D reshape.

Model file layout RBM1 (little-endian):
    "RBM1" | u32 version=1 | u32 mode | u32 m | u32 n
    | u32 layer count | per layer [u32 kind | u32 act | 5 x u32 dims]
    | u64 parameter count | f64 parameter blob (layer order, weight then bias)
"""

import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .data import class_midpoint, quantize_distance
from .errors import (
    BadMagic,
    LayoutMismatch,
    NonFiniteLoss,
    ShapeMismatch,
    TruncatedFile,
)

MODEL_MAGIC = b"RBM1"
MODEL_VERSION = 1


class Mode(str, Enum):
    CSEN = "csen"
    CL_CSEN = "cl_csen"
    CSEN_1D = "csen_1d"
    CL_CSEN_1D = "cl_csen_1d"

    @property
    def compressive(self):
        return self in (Mode.CL_CSEN, Mode.CL_CSEN_1D)

    @property
    def one_dimensional(self):
        return self in (Mode.CSEN_1D, Mode.CL_CSEN_1D)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    label_quantized: bool = False

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


# --- activations ----------------------------------------------------------

def softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def smooth_l1(x):
    """Piecewise loss: 0.5 x^2 below unit error, |x| - 0.5 above."""
    x = np.asarray(x, dtype=np.float64)
    out = np.where(np.abs(x) < 1.0, 0.5 * x * x, np.abs(x) - 0.5)
    return out if out.ndim else float(out)


def smooth_l1_grad(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.clip(x, -1.0, 1.0)
    return out if out.ndim else float(out)


# --- layers ---------------------------------------------------------------
# Layers are stateless shape descriptors; parameters live in a parallel
# list of dicts so the optimizer and serializer can treat them uniformly.

KIND_PROXY_AFFINE = 0
KIND_RESHAPE = 1
KIND_CONV2D = 2
KIND_CONV1D = 3
KIND_MAXPOOL2D = 4
KIND_MAXPOOL1D = 5
KIND_FLATTEN = 6
KIND_DENSE = 7

ACT_NONE = 0
ACT_RELU = 1
ACT_SOFTPLUS = 2


class ProxyAffine:
    kind = KIND_PROXY_AFFINE

    def __init__(self, m, n):
        self.m, self.n = m, n

    def spec(self):
        return (ACT_NONE, self.m, self.n, 0, 0, 0)

    def init_params(self, rng):
        # overwritten with B^T by the model builder
        return {"w": np.zeros((self.m, self.n)), "b": np.zeros(self.n)}

    def forward(self, x, params):
        return x @ params["w"] + params["b"], x

    def backward(self, gout, cache, params):
        x = cache
        return gout @ params["w"].T, {"w": x.T @ gout, "b": gout.sum(axis=0)}


class Reshape:
    """(B, n) -> (B, H, W, 1); cols == 0 selects the 1-D shape (B, n, 1)."""

    kind = KIND_RESHAPE

    def __init__(self, rows, cols):
        self.rows, self.cols = rows, cols

    def spec(self):
        return (ACT_NONE, self.rows, self.cols, 0, 0, 0)

    def init_params(self, rng):
        return {}

    def forward(self, x, params):
        b = x.shape[0]
        if self.cols:
            return x.reshape(b, self.rows, self.cols, 1), None
        return x.reshape(b, self.rows, 1), None

    def backward(self, gout, cache, params):
        return gout.reshape(gout.shape[0], -1), {}


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Conv2D:
    """Zero-padded ("same") stride-1 convolution, optional ReLU."""

    kind = KIND_CONV2D

    def __init__(self, kh, kw, cin, cout, relu=True):
        self.kh, self.kw, self.cin, self.cout = kh, kw, cin, cout
        self.relu = relu

    def spec(self):
        return (ACT_RELU if self.relu else ACT_NONE,
                self.kh, self.kw, self.cin, self.cout, 0)

    def init_params(self, rng):
        fan_in = self.kh * self.kw * self.cin
        fan_out = self.kh * self.kw * self.cout
        return {
            "w": _glorot(rng, (self.kh, self.kw, self.cin, self.cout), fan_in, fan_out),
            "b": np.zeros(self.cout),
        }

    def _cols(self, xp, b, h, w):
        """Patch matrix (positions x taps); single-channel inputs use a
        transposed build so every write is a contiguous row."""
        slot = self.cin
        if slot == 1:
            cols_t = np.empty((self.kh * self.kw, b * h * w))
            plane = xp[:, :, :, 0]
            for i in range(self.kh):
                for j in range(self.kw):
                    cols_t[i * self.kw + j] = plane[:, i:i + h, j:j + w].ravel()
            return cols_t.T
        cols = np.empty((b, h, w, self.kh * self.kw * slot))
        for i in range(self.kh):
            for j in range(self.kw):
                k = (i * self.kw + j) * slot
                cols[:, :, :, k:k + slot] = xp[:, i:i + h, j:j + w, :]
        return cols.reshape(b * h * w, -1)

    def forward(self, x, params):
        b, h, w, cin = x.shape
        if cin != self.cin:
            raise ShapeMismatch(f"conv2d expects {self.cin} channels, got {cin}")
        ph, pw = (self.kh - 1) // 2, (self.kw - 1) // 2
        xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
        cols = self._cols(xp, b, h, w)
        z = cols @ params["w"].reshape(-1, self.cout)
        z += params["b"]
        mask = None
        if self.relu:
            np.maximum(z, 0.0, out=z)
            mask = z > 0.0
        return z.reshape(b, h, w, self.cout), (cols, mask, (b, h, w))

    def backward(self, gout, cache, params):
        cols, mask, (b, h, w) = cache
        g2 = gout.reshape(-1, self.cout)
        if mask is not None:
            g2 = g2 * mask
        wmat = params["w"].reshape(-1, self.cout)
        gw = (cols.T @ g2).reshape(params["w"].shape)
        gb = g2.sum(axis=0)
        ph, pw = (self.kh - 1) // 2, (self.kw - 1) // 2
        gxp = np.zeros((b, h + 2 * ph, w + 2 * pw, self.cin))
        slot = self.cin
        if slot == 1:
            gcols_t = wmat @ g2.T  # taps x positions, rows contiguous
            plane = gxp[:, :, :, 0]
            for i in range(self.kh):
                for j in range(self.kw):
                    plane[:, i:i + h, j:j + w] += gcols_t[i * self.kw + j].reshape(b, h, w)
        else:
            gcols = (g2 @ wmat.T).reshape(b, h, w, -1)
            for i in range(self.kh):
                for j in range(self.kw):
                    k = (i * self.kw + j) * slot
                    gxp[:, i:i + h, j:j + w, :] += gcols[:, :, :, k:k + slot]
        gin = gxp[:, ph:ph + h, pw:pw + w, :]
        return gin, {"w": gw, "b": gb}


class Conv1D:
    """Zero-padded ("same") stride-1 1-D convolution, optional ReLU."""

    kind = KIND_CONV1D

    def __init__(self, k, cin, cout, relu=True):
        self.k, self.cin, self.cout = k, cin, cout
        self.relu = relu

    def spec(self):
        return (ACT_RELU if self.relu else ACT_NONE,
                self.k, self.cin, self.cout, 0, 0)

    def init_params(self, rng):
        fan_in = self.k * self.cin
        fan_out = self.k * self.cout
        return {
            "w": _glorot(rng, (self.k, self.cin, self.cout), fan_in, fan_out),
            "b": np.zeros(self.cout),
        }

    def forward(self, x, params):
        b, length, cin = x.shape
        if cin != self.cin:
            raise ShapeMismatch(f"conv1d expects {self.cin} channels, got {cin}")
        pad = (self.k - 1) // 2
        xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
        if self.cin == 1:
            cols_t = np.empty((self.k, b * length))
            plane = xp[:, :, 0]
            for i in range(self.k):
                cols_t[i] = plane[:, i:i + length].ravel()
            cols = cols_t.T
        else:
            cols = np.empty((b, length, self.k * self.cin))
            for i in range(self.k):
                cols[:, :, i * self.cin:(i + 1) * self.cin] = xp[:, i:i + length, :]
            cols = cols.reshape(b * length, -1)
        z = cols @ params["w"].reshape(-1, self.cout)
        z += params["b"]
        mask = None
        if self.relu:
            np.maximum(z, 0.0, out=z)
            mask = z > 0.0
        return z.reshape(b, length, self.cout), (cols, mask, (b, length))

    def backward(self, gout, cache, params):
        cols, mask, (b, length) = cache
        g2 = gout.reshape(-1, self.cout)
        if mask is not None:
            g2 = g2 * mask
        wmat = params["w"].reshape(-1, self.cout)
        gw = (cols.T @ g2).reshape(params["w"].shape)
        gb = g2.sum(axis=0)
        pad = (self.k - 1) // 2
        gxp = np.zeros((b, length + 2 * pad, self.cin))
        if self.cin == 1:
            gcols_t = wmat @ g2.T
            plane = gxp[:, :, 0]
            for i in range(self.k):
                plane[:, i:i + length] += gcols_t[i].reshape(b, length)
        else:
            gcols = (g2 @ wmat.T).reshape(b, length, -1)
            for i in range(self.k):
                gxp[:, i:i + length, :] += gcols[:, :, i * self.cin:(i + 1) * self.cin]
        return gxp[:, pad:pad + length, :], {"w": gw, "b": gb}


class MaxPool2D:
    """Non-overlapping max pooling; gradient routes to the first (row-major)
    cell attaining each window's max.

    Windows partition the grid (stride = size), so rows of the flattened
    input are gathered into (windows x cells) once per pass and the
    backward scatter is a plain permutation write.
    """

    kind = KIND_MAXPOOL2D

    def __init__(self, ph, pw):
        self.ph, self.pw = ph, pw
        self._rows = {}

    def spec(self):
        return (ACT_NONE, self.ph, self.pw, 0, 0, 0)

    def init_params(self, rng):
        return {}

    def _window_rows(self, b, h, w):
        # flat row index of every window cell, ordered (window, row-major cell)
        key = (b, h, w)
        rows = self._rows.get(key)
        if rows is None:
            ho, wo = h // self.ph, w // self.pw
            bi, wr, wc, r, s = np.ix_(
                np.arange(b), np.arange(ho), np.arange(wo),
                np.arange(self.ph), np.arange(self.pw))
            rows = (bi * h * w + (wr * self.ph + r) * w + wc * self.pw + s)
            rows = rows.reshape(b * ho * wo * self.ph * self.pw)
            self._rows[key] = rows
        return rows

    def forward(self, x, params):
        b, h, w, c = x.shape
        if h % self.ph or w % self.pw:
            raise LayoutMismatch(f"pool {self.ph}x{self.pw} does not tile {h}x{w}")
        ho, wo = h // self.ph, w // self.pw
        cells = self.ph * self.pw
        rows = self._window_rows(b, h, w)
        wnd = x.reshape(b * h * w, c)[rows].reshape(-1, cells, c)
        out = wnd[:, 0, :].copy()
        for k in range(1, cells):
            np.maximum(out, wnd[:, k, :], out=out)
        return out.reshape(b, ho, wo, c), (wnd, out, (b, h, w, c))

    def backward(self, gout, cache, params):
        wnd, out, (b, h, w, c) = cache
        cells = self.ph * self.pw
        hit = wnd == out[:, None, :]
        # first-occurrence (row-major) cell takes the whole gradient on ties
        np.logical_and(hit, np.cumsum(hit, axis=1, dtype=np.uint8) == 1, out=hit)
        routed = hit * gout.reshape(-1, 1, c)
        gin = np.empty((b * h * w, c))
        gin[self._window_rows(b, h, w)] = routed.reshape(-1, c)
        return gin.reshape(b, h, w, c), {}


class MaxPool1D:
    kind = KIND_MAXPOOL1D

    def __init__(self, p):
        self.p = p

    def spec(self):
        return (ACT_NONE, self.p, 0, 0, 0, 0)

    def init_params(self, rng):
        return {}

    def forward(self, x, params):
        b, length, c = x.shape
        if length % self.p:
            raise LayoutMismatch(f"pool {self.p} does not tile length {length}")
        lo = length // self.p
        wnd = x.reshape(b * lo, self.p, c)
        out = wnd[:, 0, :].copy()
        for k in range(1, self.p):
            np.maximum(out, wnd[:, k, :], out=out)
        return out.reshape(b, lo, c), (wnd, out, (b, length, c))

    def backward(self, gout, cache, params):
        wnd, out, (b, length, c) = cache
        hit = wnd == out[:, None, :]
        # first cell attaining the max takes the whole gradient on ties
        np.logical_and(hit, np.cumsum(hit, axis=1, dtype=np.uint8) == 1, out=hit)
        gin = hit * gout.reshape(-1, 1, c)
        return gin.reshape(b, length, c), {}


class Flatten:
    kind = KIND_FLATTEN

    def spec(self):
        return (ACT_NONE, 0, 0, 0, 0, 0)

    def init_params(self, rng):
        return {}

    def forward(self, x, params):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, gout, cache, params):
        return gout.reshape(cache), {}


class Dense:
    kind = KIND_DENSE

    def __init__(self, nin, nout, activation="none"):
        self.nin, self.nout = nin, nout
        self.activation = activation

    def spec(self):
        act = ACT_SOFTPLUS if self.activation == "softplus" else ACT_NONE
        return (act, self.nin, self.nout, 0, 0, 0)

    def init_params(self, rng):
        return {
            "w": _glorot(rng, (self.nin, self.nout), self.nin, self.nout),
            "b": np.zeros(self.nout),
        }

    def forward(self, x, params):
        z = x @ params["w"] + params["b"]
        if self.activation == "softplus":
            return softplus(z), (x, z)
        return z, (x, None)

    def backward(self, gout, cache, params):
        x, z = cache
        if z is not None:
            gout = gout * _sigmoid(z)
        return gout @ params["w"].T, {"w": x.T @ gout, "b": gout.sum(axis=0)}


# --- model ----------------------------------------------------------------

@dataclass
class CsenModel:
    mode: Mode
    layers: list
    params: list            # one dict per layer
    m: int                  # compressed measurement dimension
    n: int                  # dictionary atom count
    seed: int = 0

    def parameter_count(self):
        return sum(int(a.size) for p in self.params for a in p.values())

    def copy(self):
        return CsenModel(
            mode=self.mode,
            layers=self.layers,
            params=[{k: v.copy() for k, v in p.items()} for p in self.params],
            m=self.m,
            n=self.n,
            seed=self.seed,
        )


def build_model(mode, dictionary, dm, layout, seed=0, conv_channels=64,
                kernel_2d=5, kernel_1d=25):
    """Assemble a regressor for the given dictionary and grid.

    The compressive-learning modes prepend the affine proxy map initialized
    with B^T and zero bias; convolution and dense weights are
    Glorot-uniform draws from the seed, biases zero.
    """
    mode = Mode(mode)
    n, m = dictionary.n, dictionary.m
    c = dictionary.classes
    if layout.cells != n:
        raise LayoutMismatch(f"grid {layout.grid_rows}x{layout.grid_cols} != n={n}")
    if layout.grid_rows % layout.block_rows or layout.grid_cols % layout.block_cols:
        raise LayoutMismatch("pooling windows do not tile the grid")

    layers = []
    if mode.compressive:
        layers.append(ProxyAffine(m, n))
    if mode.one_dimensional:
        per_class = dictionary.per_class
        layers += [
            Reshape(n, 0),
            Conv1D(kernel_1d, 1, conv_channels, relu=True),
            MaxPool1D(per_class),
            Conv1D(kernel_1d, conv_channels, 1, relu=True),
            Flatten(),
            Dense(c, 1, activation="softplus"),
        ]
    else:
        layers += [
            Reshape(layout.grid_rows, layout.grid_cols),
            Conv2D(kernel_2d, kernel_2d, 1, conv_channels, relu=True),
            MaxPool2D(layout.block_rows, layout.block_cols),
            Conv2D(kernel_2d, kernel_2d, conv_channels, 1, relu=True),
            Flatten(),
            Dense(c, 1, activation="softplus"),
        ]

    rng = np.random.default_rng(seed)
    params = [layer.init_params(rng) for layer in layers]
    if mode.compressive:
        from .dictionary import proxy_scale

        # B^T up to the standardization scalar, so the learned proxy map
        # starts out emitting the same unit-variance signal the plain
        # regressor receives
        params[0]["w"] = dm.B.T / proxy_scale(dictionary, dm)
        params[0]["b"] = np.zeros(n)
    return CsenModel(mode=mode, layers=layers, params=params, m=m, n=n, seed=seed)


def prepare_for_training(model):
    """Pre-training conditioning applied by the experiment harness: zero
    the output layer's weights (the bias is already zero).

    Early training is a ramp phase where every prediction sits far below
    its target and the clipped smooth-l1 gradient is -1 for whole epochs.
    With a random readout, that constant pressure propagates through the
    sign-mixed output weights and reliably kills the single-channel second
    convolution for some seeds (the network then collapses to a constant).
    Starting the readout at zero makes the ramp ride on the output bias
    alone while the weights regrow in the direction correlated with the
    data, which keeps every seed trainable.
    """
    model.params[-1]["w"][:] = 0.0
    return model


def forward_batch(model, x):
    """Run a batch of network inputs; returns (predictions, caches)."""
    caches = []
    for layer, params in zip(model.layers, model.params):
        x, cache = layer.forward(x, params)
        caches.append(cache)
    return x[:, 0], caches


def backward_batch(model, caches, dpred):
    """Gradients of a scalar loss wrt every parameter, given d(loss)/d(pred)."""
    g = dpred[:, None]
    grads = [None] * len(model.layers)
    for i in range(len(model.layers) - 1, -1, -1):
        g, gparams = model.layers[i].backward(g, caches[i], model.params[i])
        grads[i] = gparams
    return grads


def forward(model, x):
    """Single-input forward pass; returns (prediction, caches)."""
    x = np.asarray(x, dtype=np.float64)
    expected = model.n if not model.mode.compressive else model.m
    if x.shape != (expected,):
        raise ShapeMismatch(f"input shape {x.shape}, expected ({expected},)")
    preds, caches = forward_batch(model, x[None, :])
    return float(preds[0]), caches


def backward(model, caches, dloss_dpred):
    return backward_batch(model, caches, np.array([dloss_dpred], dtype=np.float64))


def network_inputs(model_mode, dictionary, dm, features):
    """Network input rows for raw features: the compressed unit-norm query
    for compressive-learning modes, otherwise the precomputed proxy B y
    standardized by the dictionary's proxy scale (see proxy_scale)."""
    from .dictionary import proxy_scale

    y = dictionary.compress_batch(np.atleast_2d(features))
    if Mode(model_mode).compressive:
        return y
    return (y @ dm.B.T) / proxy_scale(dictionary, dm)


def predict(model, dictionary, dm, feature):
    x = network_inputs(model.mode, dictionary, dm, np.asarray(feature))
    preds, _ = forward_batch(model, x)
    return float(preds[0])


def predict_batch(model, dictionary, dm, features, chunk=512):
    x = network_inputs(model.mode, dictionary, dm, features)
    out = np.empty(x.shape[0])
    for start in range(0, x.shape[0], chunk):
        preds, _ = forward_batch(model, x[start:start + chunk])
        out[start:start + chunk] = preds
    return out


class _Adam:
    def __init__(self, params, lr, beta1, beta2, eps):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]
        self.v = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            for k in p:
                m[k] *= self.b1
                m[k] += (1.0 - self.b1) * g[k]
                v[k] *= self.b2
                v[k] += (1.0 - self.b2) * (g[k] * g[k])
                denom = np.sqrt(v[k] / c2)
                denom += self.eps
                p[k] -= (self.lr / c1) * m[k] / denom


def _mean_loss(model, x, targets, chunk=512):
    total = 0.0
    for start in range(0, x.shape[0], chunk):
        preds, _ = forward_batch(model, x[start:start + chunk])
        total += float(np.sum(smooth_l1(preds - targets[start:start + chunk])))
    return total / x.shape[0]


def _labels(ds, quantized, range_min, range_max, bin_width):
    if not quantized:
        return ds.distances.copy()
    return np.array([
        class_midpoint(quantize_distance(t, range_min, range_max, bin_width),
                       range_min, bin_width)
        for t in ds.distances
    ])


def train(model, dictionary, dm, train_set, val_set, cfg,
          range_min=0.5, range_max=60.5, bin_width=1.0):
    """Adam training with per-epoch validation; returns the checkpoint with
    the minimum validation smooth-l1 loss and the per-epoch history.

    The batch loss is the sum of smooth-l1 errors over the batch. Fully
    deterministic given the model seed and cfg.seed.
    """
    x_train = network_inputs(model.mode, dictionary, dm, train_set.features)
    x_val = network_inputs(model.mode, dictionary, dm, val_set.features)
    y_train = _labels(train_set, cfg.label_quantized, range_min, range_max, bin_width)
    y_val = _labels(val_set, cfg.label_quantized, range_min, range_max, bin_width)

    rng = np.random.default_rng(cfg.seed)
    opt = _Adam(model.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    history = []
    best_params = None
    best_val = np.inf
    n = x_train.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            preds, caches = forward_batch(model, x_train[idx])
            err = preds - y_train[idx]
            batch_loss = float(np.sum(smooth_l1(err)))
            if not np.isfinite(batch_loss):
                raise NonFiniteLoss(epoch, bi)
            epoch_loss += batch_loss
            grads = backward_batch(model, caches, smooth_l1_grad(err))
            opt.step(model.params, grads)
        val_loss = _mean_loss(model, x_val, y_val)
        if not np.isfinite(val_loss):
            raise NonFiniteLoss(epoch, -1)
        history.append({
            "epoch": epoch,
            "train_loss": epoch_loss / n,
            "val_loss": val_loss,
        })
        if val_loss < best_val:
            best_val = val_loss
            best_params = [{k: v.copy() for k, v in p.items()} for p in model.params]

    best = model.copy()
    if best_params is not None:
        best.params = best_params
    return best, history


def write_history(history, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for row in history:
            fh.write(f"{row['epoch']},{row['train_loss']!r},{row['val_loss']!r}\n")


# --- serialization --------------------------------------------------------

_MODE_TAGS = {Mode.CSEN: 0, Mode.CL_CSEN: 1, Mode.CSEN_1D: 2, Mode.CL_CSEN_1D: 3}
_TAG_MODES = {v: k for k, v in _MODE_TAGS.items()}


def save_model(model, path):
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<4I", MODEL_VERSION, _MODE_TAGS[model.mode],
                             model.m, model.n))
        fh.write(struct.pack("<I", len(model.layers)))
        for layer in model.layers:
            act, *dims = layer.spec()
            fh.write(struct.pack("<7I", layer.kind, act, *dims))
        blob = []
        count = 0
        for p in model.params:
            for k in ("w", "b"):
                if k in p:
                    blob.append(np.ascontiguousarray(p[k]).tobytes())
                    count += p[k].size
        fh.write(struct.pack("<Q", count))
        for chunk in blob:
            fh.write(chunk)


def _layer_from_spec(kind, act, dims):
    if kind == KIND_PROXY_AFFINE:
        return ProxyAffine(dims[0], dims[1])
    if kind == KIND_RESHAPE:
        return Reshape(dims[0], dims[1])
    if kind == KIND_CONV2D:
        return Conv2D(dims[0], dims[1], dims[2], dims[3], relu=act == ACT_RELU)
    if kind == KIND_CONV1D:
        return Conv1D(dims[0], dims[1], dims[2], relu=act == ACT_RELU)
    if kind == KIND_MAXPOOL2D:
        return MaxPool2D(dims[0], dims[1])
    if kind == KIND_MAXPOOL1D:
        return MaxPool1D(dims[0])
    if kind == KIND_FLATTEN:
        return Flatten()
    if kind == KIND_DENSE:
        return Dense(dims[0], dims[1],
                     activation="softplus" if act == ACT_SOFTPLUS else "none")
    raise BadMagic(f"unknown layer kind {kind}")


def load_model(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MODEL_MAGIC:
        raise BadMagic(f"{path}: expected {MODEL_MAGIC!r}, got {blob[:4]!r}")
    version, mode_tag, m, n = struct.unpack_from("<4I", blob, 4)
    if version != MODEL_VERSION:
        raise BadMagic(f"{path}: unsupported version {version}")
    (n_layers,) = struct.unpack_from("<I", blob, 20)
    off = 24
    layers = []
    for _ in range(n_layers):
        kind, act, *dims = struct.unpack_from("<7I", blob, off)
        off += 28
        layers.append(_layer_from_spec(kind, act, dims))
    (count,) = struct.unpack_from("<Q", blob, off)
    off += 8
    if off + 8 * count > len(blob):
        raise TruncatedFile(f"{path}: parameter blob truncated")
    vals = np.frombuffer(blob, dtype="<f8", count=count, offset=off)

    rng = np.random.default_rng(0)
    params = [layer.init_params(rng) for layer in layers]
    pos = 0
    for p in params:
        for k in ("w", "b"):
            if k not in p:
                continue
            size = p[k].size
            p[k] = vals[pos:pos + size].reshape(p[k].shape).copy()
            pos += size
    if pos != count:
        raise TruncatedFile(f"{path}: parameter count mismatch")
    return CsenModel(mode=_TAG_MODES[mode_tag], layers=layers, params=params,
                     m=m, n=n)
