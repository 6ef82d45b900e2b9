"""Forward and backward passes for every layer in the network stack.

Conventions, fixed once for the whole package:
  * Convolution is valid (no padding), stride 1, cross-correlation orientation
    (no kernel flip): y[j][u][v] = b[j] + sum_c sum_a sum_d k[j][c][a][d] * x[c][u+a][v+d].
    A [c_in, t, f] input and m x r filters give an [n, t-m+1, f-r+1] output.
  * Pooling windows are p x q, disjoint (stride == window). Trailing rows/cols
    that do not fill a window are dropped and receive zero gradient.
  * Ties: ReLU gradient at exactly 0 is 0; max-pool routes gradient to the
    first (row-major) maximal element of the window.

All ops are pure: parameters are read-only during a pass and gradients are
returned, never accumulated in place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError
from .tensor import Tensor, Rng, glorot_init


# ---------------------------------------------------------------------------
# Layer parameter containers


@dataclass
class Conv2DLayer:
    """A bank of n filters, each c_in x m x r, with one bias per filter."""

    kernels: Tensor   # [n, c_in, m, r]
    biases: Tensor    # [n]

    @property
    def n(self) -> int:
        return self.kernels.shape[0]

    @property
    def c_in(self) -> int:
        return self.kernels.shape[1]

    @property
    def m(self) -> int:
        return self.kernels.shape[2]

    @property
    def r(self) -> int:
        return self.kernels.shape[3]


@dataclass
class PoolSpec:
    """Non-overlapping p x q pooling window; mode is 'max' or 'average'."""

    p: int
    q: int
    mode: str = "max"

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise ShapeError(f"pool window must be >= 1x1, got {self.p}x{self.q}")
        if self.mode not in ("max", "average"):
            raise ShapeError(f"pool mode must be 'max' or 'average', got {self.mode!r}")


@dataclass
class DenseLayer:
    weights: Tensor   # [in_dim, out_dim]
    biases: Tensor    # [out_dim]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]


def make_conv_layer(n: int, m: int, r: int, c_in: int, rng: Rng, dtype=np.float32) -> Conv2DLayer:
    """Glorot-initialized kernels (fans count the receptive field), zero biases."""
    kernels = glorot_init(c_in * m * r, n * m * r, (n, c_in, m, r), rng, dtype=dtype)
    biases = Tensor.zeros((n,), dtype=dtype)
    return Conv2DLayer(kernels, biases)


def make_dense_layer(in_dim: int, out_dim: int, rng: Rng, dtype=np.float32) -> DenseLayer:
    weights = glorot_init(in_dim, out_dim, (in_dim, out_dim), rng, dtype=dtype)
    biases = Tensor.zeros((out_dim,), dtype=dtype)
    return DenseLayer(weights, biases)


# ---------------------------------------------------------------------------
# Caches (backprop bookkeeping)


@dataclass
class ConvCache:
    x: np.ndarray            # forward input [c_in, t, f]


@dataclass
class PoolCache:
    in_shape: tuple          # (n, h, w)
    p: int
    q: int
    mode: str
    winners: np.ndarray | None   # flat in-window argmax [n, oh, ow], max mode only
    dtype: np.dtype


@dataclass
class GapCache:
    in_shape: tuple          # (n, h, w)
    dtype: np.dtype


@dataclass
class ReluCache:
    x: np.ndarray


@dataclass
class SigmoidCache:
    y: np.ndarray


@dataclass
class DenseCache:
    x: np.ndarray            # forward input [in_dim]


# ---------------------------------------------------------------------------
# Convolution


def _im2col(x: np.ndarray, m: int, r: int) -> np.ndarray:
    """Unfold [c, t, f] into a [c*m*r, oh*ow] patch matrix (row-major patches)."""
    c = x.shape[0]
    windows = sliding_window_view(x, (m, r), axis=(1, 2))    # [c, oh, ow, m, r]
    oh, ow = windows.shape[1], windows.shape[2]
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(c * m * r, oh * ow)
    return np.ascontiguousarray(cols)


def conv_forward(layer: Conv2DLayer, x: Tensor) -> tuple[Tensor, ConvCache]:
    """Valid cross-correlation of a filter bank with a [c_in, t, f] input."""
    if x.data.ndim != 3:
        raise ShapeError(f"conv input must be [channels, height, width], got {x.shape}")
    c, t, f = x.shape
    n, c_in, m, r = layer.kernels.shape
    if c != c_in:
        raise ShapeError(f"conv channel mismatch: layer expects {c_in} channels, input has {c} "
                         f"(input {x.shape}, kernels {layer.kernels.shape})")
    if t < m or f < r:
        raise ShapeError(f"filter {m}x{r} larger than input {t}x{f}")

    cols = _im2col(x.data, m, r)
    w_mat = layer.kernels.data.reshape(n, c_in * m * r)
    y = w_mat @ cols + layer.biases.data[:, None]
    oh, ow = t - m + 1, f - r + 1
    return Tensor(y.reshape(n, oh, ow)), ConvCache(x=x.data)


def conv_backward(layer: Conv2DLayer, cache: ConvCache,
                  dy: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Gradients (dx, dk, db) of sum(dy * conv_forward(x)) w.r.t. x, kernels, biases."""
    n, c_in, m, r = layer.kernels.shape
    c, t, f = cache.x.shape
    oh, ow = t - m + 1, f - r + 1
    if dy.shape != (n, oh, ow):
        raise ShapeError(f"conv cotangent shape {dy.shape} does not match forward output "
                         f"({n}, {oh}, {ow})")

    dy_mat = dy.data.reshape(n, oh * ow)
    cols = _im2col(cache.x, m, r)

    db = dy.data.sum(axis=(1, 2))
    dk = (dy_mat @ cols.T).reshape(n, c_in, m, r)

    # Fold the patch-space gradient back onto the input: each kernel offset
    # (a, d) touches the x window [a : a+oh, d : d+ow].
    w_mat = layer.kernels.data.reshape(n, c_in * m * r)
    dcols = (w_mat.T @ dy_mat).reshape(c_in, m, r, oh, ow)
    dx = np.zeros_like(cache.x)
    for a in range(m):
        for d in range(r):
            dx[:, a:a + oh, d:d + ow] += dcols[:, a, d]

    return Tensor(dx), Tensor(dk), Tensor(db)


# ---------------------------------------------------------------------------
# Pooling


def _pool_windows(x: np.ndarray, p: int, q: int) -> np.ndarray:
    """Disjoint p x q windows of [n, h, w] as a contiguous [n, oh, ow, p*q] array."""
    n, h, w = x.shape
    oh, ow = h // p, w // q
    crop = x[:, :oh * p, :ow * q]
    return crop.reshape(n, oh, p, ow, q).transpose(0, 1, 3, 2, 4).reshape(n, oh, ow, p * q)


def pool_forward(spec: PoolSpec, x: Tensor) -> tuple[Tensor, PoolCache]:
    """Max or average over disjoint p x q windows; floor semantics on the edges."""
    if x.data.ndim != 3:
        raise ShapeError(f"pool input must be [maps, height, width], got {x.shape}")
    n, h, w = x.shape
    if h < spec.p or w < spec.q:
        raise ShapeError(f"pool window {spec.p}x{spec.q} larger than input {h}x{w}")

    flat = _pool_windows(x.data, spec.p, spec.q)
    if spec.mode == "max":
        winners = flat.argmax(axis=3)        # first max in row-major window order
        y = np.take_along_axis(flat, winners[..., None], axis=3)[..., 0]
    else:
        winners = None
        y = flat.mean(axis=3)
    cache = PoolCache(in_shape=(n, h, w), p=spec.p, q=spec.q, mode=spec.mode,
                      winners=winners, dtype=x.data.dtype)
    return Tensor(y), cache


def pool_backward(spec: PoolSpec, cache: PoolCache, dy: Tensor) -> Tensor:
    """Route dy to window winners (max) or spread dy/(p*q) per window (average)."""
    n, h, w = cache.in_shape
    p, q = cache.p, cache.q
    oh, ow = h // p, w // q
    if dy.shape != (n, oh, ow):
        raise ShapeError(f"pool cotangent shape {dy.shape} does not match forward output "
                         f"({n}, {oh}, {ow})")

    dx = np.zeros(cache.in_shape, dtype=cache.dtype)
    if cache.mode == "max":
        # Winner positions are unique per disjoint window, so plain assignment works.
        a, d = cache.winners // q, cache.winners % q
        ni = np.arange(n)[:, None, None]
        oi = np.arange(oh)[None, :, None]
        oj = np.arange(ow)[None, None, :]
        dx[ni, oi * p + a, oj * q + d] = dy.data
    else:
        spread = np.repeat(np.repeat(dy.data, p, axis=1), q, axis=2) / (p * q)
        dx[:, :oh * p, :ow * q] = spread
    return Tensor(dx)


def global_avg_pool(x: Tensor) -> tuple[Tensor, GapCache]:
    """Reduce each feature map of [n, h, w] to its mean: output [n]."""
    if x.data.ndim != 3:
        raise ShapeError(f"global average pool input must be [maps, height, width], got {x.shape}")
    n, h, w = x.shape
    y = x.data.reshape(n, h * w).mean(axis=1)
    return Tensor(y), GapCache(in_shape=(n, h, w), dtype=x.data.dtype)


def global_avg_pool_backward(cache: GapCache, dy: Tensor) -> Tensor:
    n, h, w = cache.in_shape
    if dy.shape != (n,):
        raise ShapeError(f"gap cotangent shape {dy.shape} does not match ({n},)")
    dx = np.broadcast_to((dy.data / (h * w))[:, None, None], (n, h, w))
    return Tensor(dx.astype(cache.dtype, copy=True))


# ---------------------------------------------------------------------------
# Activations


def relu(x: Tensor) -> tuple[Tensor, ReluCache]:
    return Tensor(np.maximum(x.data, 0)), ReluCache(x=x.data)


def relu_backward(cache: ReluCache, dy: Tensor) -> Tensor:
    if dy.shape != cache.x.shape:
        raise ShapeError(f"relu cotangent shape {dy.shape} does not match input {cache.x.shape}")
    return Tensor(dy.data * (cache.x > 0))


def sigmoid(x: Tensor) -> tuple[Tensor, SigmoidCache]:
    """1 / (1 + exp(-x)), exponentiating only negative magnitudes (no overflow)."""
    z = np.exp(-np.abs(x.data))
    y = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z)).astype(x.data.dtype)
    return Tensor(y), SigmoidCache(y=y)


def sigmoid_backward(cache: SigmoidCache, dy: Tensor) -> Tensor:
    if dy.shape != cache.y.shape:
        raise ShapeError(f"sigmoid cotangent shape {dy.shape} does not match {cache.y.shape}")
    return Tensor(dy.data * cache.y * (1.0 - cache.y))


# ---------------------------------------------------------------------------
# Dense


def dense_forward(layer: DenseLayer, x: Tensor) -> tuple[Tensor, DenseCache]:
    """y = x W + b for a 1-D input."""
    if x.data.ndim != 1:
        raise ShapeError(f"dense input must be 1-D, got {x.shape}")
    if x.shape[0] != layer.in_dim:
        raise ShapeError(f"dense input dim {x.shape[0]} does not match layer in_dim "
                         f"{layer.in_dim}")
    y = x.data @ layer.weights.data + layer.biases.data
    return Tensor(y), DenseCache(x=x.data)


def dense_backward(layer: DenseLayer, cache: DenseCache,
                   dy: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Gradients (dx, dW, db): dx = dy W^T, dW = x (outer) dy, db = dy."""
    if dy.shape != (layer.out_dim,):
        raise ShapeError(f"dense cotangent shape {dy.shape} does not match ({layer.out_dim},)")
    dx = dy.data @ layer.weights.data.T
    dw = np.outer(cache.x, dy.data)
    db = dy.data.copy()
    return Tensor(dx), Tensor(dw), Tensor(db)
