"""Declarative model configs, the instantiated layer stack, and checkpoints.

A config is an input shape plus an ordered list of layer specs. Two presets
ship with the package: a CNN head (flatten -> dense -> relu -> softmax output)
and an FCN head (global average pooling -> softmax output). Both share the
same convolutional trunk so head comparisons stay controlled.

Config text format, one layer per line (blank lines and '#' comments allowed):

    input 1 270 360
    conv 8 5 5
    relu
    pool 2 2 max
    ...
    softmax_output 2
"""

from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import layers as L
from .errors import CheckpointError, ConfigError, ShapeError
from .tensor import Rng, Tensor

CHECKPOINT_MAGIC = b"SGVC"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    kind: str               # conv | pool | relu | sigmoid | flatten | dense
    #                       # | global_avg_pool | softmax_output
    args: tuple = ()

    def to_line(self) -> str:
        parts = [self.kind] + [str(a) for a in self.args]
        return " ".join(parts)


def conv(n: int, m: int, r: int) -> LayerSpec:
    return LayerSpec("conv", (n, m, r))


def pool(p: int, q: int, mode: str = "max") -> LayerSpec:
    return LayerSpec("pool", (p, q, mode))


def activation(name: str) -> LayerSpec:
    if name not in ("relu", "sigmoid"):
        raise ConfigError(f"unknown activation {name!r}")
    return LayerSpec(name)


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


def dense(out_dim: int) -> LayerSpec:
    return LayerSpec("dense", (out_dim,))


def global_avg_pool() -> LayerSpec:
    return LayerSpec("global_avg_pool")


def softmax_output(classes: int) -> LayerSpec:
    return LayerSpec("softmax_output", (classes,))


@dataclass
class ModelConfig:
    input_shape: tuple[int, int, int]       # (channels, height, width)
    layers: list[LayerSpec] = field(default_factory=list)

    def validate(self) -> list[tuple]:
        """Propagate shapes through the stack; returns per-layer output shapes."""
        if len(self.input_shape) != 3 or any(int(s) < 1 for s in self.input_shape):
            raise ConfigError(f"input shape must be 3 positive extents, got {self.input_shape}")
        n_out = sum(1 for s in self.layers if s.kind == "softmax_output")
        if n_out != 1 or self.layers[-1].kind != "softmax_output":
            raise ConfigError("config must end with exactly one softmax_output layer")
        kinds = {s.kind for s in self.layers}
        if "flatten" in kinds and "global_avg_pool" in kinds:
            raise ConfigError("config mixes flatten and global_avg_pool; "
                              "pick a CNN-style or an FCN-style head")

        shape = tuple(int(s) for s in self.input_shape)
        shapes = []
        for i, spec in enumerate(self.layers):
            shape = self._propagate(i, spec, shape)
            shapes.append(shape)
        return shapes

    @staticmethod
    def _propagate(i: int, spec: LayerSpec, shape: tuple) -> tuple:
        def fail(msg):
            raise ConfigError(f"layer {i} ({spec.to_line()}): {msg}")

        if spec.kind == "conv":
            n, m, r = spec.args
            if len(shape) != 3:
                fail(f"needs a 3-D input, got {shape}")
            c, t, f = shape
            if t < m or f < r:
                fail(f"filter {m}x{r} larger than input {t}x{f}")
            return (n, t - m + 1, f - r + 1)
        if spec.kind == "pool":
            p, q, _mode = spec.args
            if len(shape) != 3:
                fail(f"needs a 3-D input, got {shape}")
            c, h, w = shape
            if h < p or w < q:
                fail(f"window {p}x{q} larger than input {h}x{w}")
            return (c, h // p, w // q)
        if spec.kind in ("relu", "sigmoid"):
            return shape
        if spec.kind == "flatten":
            return (int(np.prod(shape)),)
        if spec.kind == "global_avg_pool":
            if len(shape) != 3:
                fail(f"needs a 3-D input, got {shape}")
            return (shape[0],)
        if spec.kind == "dense":
            if len(shape) != 1:
                fail(f"needs a 1-D input (add flatten or global_avg_pool first), got {shape}")
            return (spec.args[0],)
        if spec.kind == "softmax_output":
            if len(shape) != 1:
                fail(f"needs a 1-D input (add flatten or global_avg_pool first), got {shape}")
            return (spec.args[0],)
        fail(f"unknown layer kind {spec.kind!r}")

    def to_text(self) -> str:
        """Canonical text form; also the form stored inside checkpoints."""
        lines = ["input " + " ".join(str(s) for s in self.input_shape)]
        lines += [spec.to_line() for spec in self.layers]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "ModelConfig":
        input_shape = None
        specs = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            kind, args = parts[0], parts[1:]
            try:
                if kind == "input":
                    input_shape = tuple(int(a) for a in args)
                    if len(input_shape) != 3:
                        raise ValueError
                elif kind == "conv":
                    specs.append(conv(int(args[0]), int(args[1]), int(args[2])))
                elif kind == "pool":
                    mode = args[2] if len(args) > 2 else "max"
                    specs.append(pool(int(args[0]), int(args[1]), mode))
                elif kind in ("relu", "sigmoid"):
                    specs.append(activation(kind))
                elif kind == "flatten":
                    specs.append(flatten())
                elif kind == "global_avg_pool":
                    specs.append(global_avg_pool())
                elif kind == "dense":
                    specs.append(dense(int(args[0])))
                elif kind == "softmax_output":
                    specs.append(softmax_output(int(args[0])))
                else:
                    raise ConfigError(f"line {lineno}: unknown layer kind {kind!r}")
            except ConfigError:
                raise
            except (IndexError, ValueError):
                raise ConfigError(f"line {lineno}: cannot parse {line!r}") from None
        if input_shape is None:
            raise ConfigError("config has no 'input <channels> <height> <width>' line")
        return ModelConfig(input_shape=input_shape, layers=specs)


def config_hash(config: ModelConfig) -> str:
    return hashlib.sha256(config.to_text().encode()).hexdigest()[:16]


DEFAULT_TRUNK = [
    conv(8, 5, 5), activation("relu"), pool(2, 2, "max"),
    conv(16, 5, 5), activation("relu"), pool(2, 2, "max"),
]


def default_cnn_config(input_shape=(1, 270, 360)) -> ModelConfig:
    """Baseline: shared trunk, then flatten -> dense(128) -> relu -> 2-way output."""
    return ModelConfig(input_shape=tuple(input_shape),
                       layers=DEFAULT_TRUNK + [flatten(), dense(128), activation("relu"),
                                               softmax_output(2)])


def default_fcn_config(input_shape=(1, 270, 360)) -> ModelConfig:
    """FCN variant: same trunk, head replaced by global average pooling."""
    return ModelConfig(input_shape=tuple(input_shape),
                       layers=DEFAULT_TRUNK + [global_avg_pool(), softmax_output(2)])


# ---------------------------------------------------------------------------
# Instantiated network


@dataclass
class FlattenCache:
    in_shape: tuple


class Network:
    """A built layer stack: specs plus their instantiated parameters."""

    def __init__(self, config: ModelConfig, steps: list, dtype):
        self.config = config
        self.steps = steps          # list of (LayerSpec, layer object or None)
        self.dtype = dtype
        self.param_count = sum(t.size for _, t in self.parameters())

    def parameters(self) -> list[tuple[str, Tensor]]:
        """(name, tensor) pairs in layer order; the checkpoint order."""
        out = []
        for i, (spec, layer) in enumerate(self.steps):
            if spec.kind == "conv":
                out.append((f"layer{i}.kernels", layer.kernels))
                out.append((f"layer{i}.biases", layer.biases))
            elif spec.kind in ("dense", "softmax_output"):
                out.append((f"layer{i}.weights", layer.weights))
                out.append((f"layer{i}.biases", layer.biases))
        return out

    def set_parameter(self, name: str, tensor: Tensor):
        idx = int(name.split(".")[0].removeprefix("layer"))
        attr = name.split(".")[1]
        layer = self.steps[idx][1]
        if getattr(layer, attr).shape != tensor.shape:
            raise ShapeError(f"parameter {name}: shape {tensor.shape} does not match "
                             f"{getattr(layer, attr).shape}")
        setattr(layer, attr, tensor)

    def forward_logits(self, x: Tensor) -> tuple[Tensor, list]:
        """Run the stack up to (and including) the output layer's linear part."""
        if x.shape != self.config.input_shape:
            raise ShapeError(f"input shape {x.shape} does not match configured "
                             f"{self.config.input_shape}")
        caches = []
        out = x
        for spec, layer in self.steps:
            if spec.kind == "conv":
                out, cache = L.conv_forward(layer, out)
            elif spec.kind == "pool":
                out, cache = L.pool_forward(layer, out)
            elif spec.kind == "relu":
                out, cache = L.relu(out)
            elif spec.kind == "sigmoid":
                out, cache = L.sigmoid(out)
            elif spec.kind == "flatten":
                cache = FlattenCache(in_shape=out.shape)
                out = Tensor(out.data.reshape(-1).copy())
            elif spec.kind == "global_avg_pool":
                out, cache = L.global_avg_pool(out)
            elif spec.kind in ("dense", "softmax_output"):
                out, cache = L.dense_forward(layer, out)
            caches.append(cache)
        return out, caches

    def forward(self, x: Tensor) -> tuple[Tensor, list]:
        """Class probabilities (softmax over the output layer's logits)."""
        logits, caches = self.forward_logits(x)
        return Tensor(softmax(logits.data)), caches

    def backward(self, caches: list, dlogits: Tensor) -> dict[str, Tensor]:
        """Parameter gradients for one sample, keyed like parameters()."""
        grads = {}
        dy = dlogits
        for i in range(len(self.steps) - 1, -1, -1):
            spec, layer = self.steps[i]
            cache = caches[i]
            if spec.kind == "conv":
                dy, dk, db = L.conv_backward(layer, cache, dy)
                grads[f"layer{i}.kernels"] = dk
                grads[f"layer{i}.biases"] = db
            elif spec.kind == "pool":
                dy = L.pool_backward(layer, cache, dy)
            elif spec.kind == "relu":
                dy = L.relu_backward(cache, dy)
            elif spec.kind == "sigmoid":
                dy = L.sigmoid_backward(cache, dy)
            elif spec.kind == "flatten":
                dy = Tensor(dy.data.reshape(cache.in_shape).copy())
            elif spec.kind == "global_avg_pool":
                dy = L.global_avg_pool_backward(cache, dy)
            elif spec.kind in ("dense", "softmax_output"):
                dy, dw, db = L.dense_backward(layer, cache, dy)
                grads[f"layer{i}.weights"] = dw
                grads[f"layer{i}.biases"] = db
        return grads


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def build_network(config: ModelConfig, rng: Rng, dtype=np.float32) -> Network:
    """Instantiate a config: shape check, then Glorot-init all parameters."""
    shapes = config.validate()
    steps = []
    shape = tuple(int(s) for s in config.input_shape)
    for spec, out_shape in zip(config.layers, shapes):
        if spec.kind == "conv":
            n, m, r = spec.args
            layer = L.make_conv_layer(n, m, r, c_in=shape[0], rng=rng, dtype=dtype)
        elif spec.kind == "pool":
            p, q, mode = spec.args
            layer = L.PoolSpec(p, q, mode)
        elif spec.kind in ("dense", "softmax_output"):
            layer = L.make_dense_layer(shape[0], spec.args[0], rng=rng, dtype=dtype)
        else:
            layer = None
        steps.append((spec, layer))
        shape = out_shape
    return Network(config, steps, dtype)


def param_count(net: Network) -> int:
    """Learnable scalar count, by enumeration of instantiated parameters."""
    return sum(t.size for _, t in net.parameters())


# ---------------------------------------------------------------------------
# Checkpoints
#
# Layout (all integers little-endian):
#   magic "SGVC" | u32 version | u64 seed | u32 config_len | config utf-8
#   | u64 n_params | n_params * f32 (parameters() order) | u32 crc32 of all
#   preceding bytes.


def save_checkpoint(net: Network, path, seed: int = 0):
    config_text = net.config.to_text().encode()
    flat = np.concatenate([t.data.reshape(-1) for _, t in net.parameters()]) \
        if net.param_count else np.zeros(0, dtype=np.float32)
    body = (CHECKPOINT_MAGIC
            + struct.pack("<I", CHECKPOINT_VERSION)
            + struct.pack("<Q", int(seed) & 0xFFFFFFFFFFFFFFFF)
            + struct.pack("<I", len(config_text)) + config_text
            + struct.pack("<Q", flat.size)
            + flat.astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(body + struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(path) -> tuple[Network, int]:
    """Rebuild a network from a checkpoint; returns (network, stored seed)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    if len(blob) < 24:
        raise CheckpointError(f"{path}: truncated header")
    if zlib.crc32(blob[:-4]) != struct.unpack("<I", blob[-4:])[0]:
        raise CheckpointError(f"{path}: checksum failure, file is corrupt")

    off = 4
    version, = struct.unpack_from("<I", blob, off); off += 4
    if version > CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: format version {version} is newer than supported "
                              f"version {CHECKPOINT_VERSION}")
    seed, = struct.unpack_from("<Q", blob, off); off += 8
    config_len, = struct.unpack_from("<I", blob, off); off += 4
    if off + config_len > len(blob) - 4:
        raise CheckpointError(f"{path}: truncated config block")
    config = ModelConfig.from_text(blob[off:off + config_len].decode())
    off += config_len
    if off + 8 > len(blob) - 4:
        raise CheckpointError(f"{path}: truncated parameter header")
    n_params, = struct.unpack_from("<Q", blob, off); off += 8
    expected_end = off + 4 * n_params + 4
    if expected_end != len(blob):
        raise CheckpointError(f"{path}: truncated parameter block "
                              f"(expected {expected_end} bytes, file has {len(blob)})")
    flat = np.frombuffer(blob, dtype="<f4", count=n_params, offset=off).astype(np.float32)

    net = build_network(config, Rng(0), dtype=np.float32)
    if net.param_count != n_params:
        raise CheckpointError(f"{path}: checkpoint stores {n_params} parameters but the "
                              f"config defines {net.param_count}")
    pos = 0
    for name, tensor in net.parameters():
        chunk = flat[pos:pos + tensor.size]
        net.set_parameter(name, Tensor(chunk.reshape(tensor.shape).copy()))
        pos += tensor.size
    return net, seed
