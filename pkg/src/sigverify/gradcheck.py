"""Finite-difference verification of every backward pass.

Each analytic gradient is compared against 64-bit central differences of the
scalar J = sum(dy * f(x)) (or the actual loss, for the end-to-end check) at
inputs nudged away from kinks: ReLU inputs keep a margin from 0 and pooling
windows keep a clear winner, so the finite-difference step never crosses a
non-differentiable point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers as L
from . import network as N
from . import training as T
from .tensor import Rng, Tensor

DEFAULT_TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric) / denom))


def _numeric_grad(fn, arr: np.ndarray, eps: float) -> np.ndarray:
    """Central differences of scalar fn() w.r.t. every element of arr (in place)."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        plus = fn()
        flat[i] = orig - eps
        minus = fn()
        flat[i] = orig
        gflat[i] = (plus - minus) / (2 * eps)
    return grad


def _avoid_relu_kinks(x: np.ndarray, margin: float) -> np.ndarray:
    x = x.copy()
    x[np.abs(x) < margin] += 2 * margin
    return x


def _avoid_pool_ties(x: np.ndarray, p: int, q: int, margin: float) -> np.ndarray:
    """Ensure each window's max beats the runner-up by at least margin."""
    x = x.copy()
    n, h, w = x.shape
    for k in range(n):
        for i in range(0, (h // p) * p, p):
            for j in range(0, (w // q) * q, q):
                win = x[k, i:i + p, j:j + q]
                order = np.argsort(win.reshape(-1))
                if win.size > 1 and win.reshape(-1)[order[-1]] - win.reshape(-1)[order[-2]] < margin:
                    win.reshape(-1)[order[-1]] += margin
    return x


def check_conv(rng: Rng, eps: float, tol: float) -> CheckResult:
    x = rng.uniform(-1, 1, (2, 6, 7))
    layer = L.make_conv_layer(n=2, m=3, r=3, c_in=2, rng=rng, dtype=np.float64)
    dy = Tensor(rng.uniform(-1, 1, (2, 4, 5)))

    def J():
        y, _ = L.conv_forward(layer, Tensor(x))
        return float((dy.data * y.data).sum())

    _, cache = L.conv_forward(layer, Tensor(x))
    dx, dk, db = L.conv_backward(layer, cache, dy)
    errs = [
        _rel_err(dx.data, _numeric_grad(J, x, eps)),
        _rel_err(dk.data, _numeric_grad(J, layer.kernels.data, eps)),
        _rel_err(db.data, _numeric_grad(J, layer.biases.data, eps)),
    ]
    return CheckResult("conv", max(errs), tol)


def _check_pool(mode: str, rng: Rng, eps: float, tol: float) -> CheckResult:
    spec = L.PoolSpec(2, 3, mode)
    x = rng.uniform(-1, 1, (2, 5, 7))
    if mode == "max":
        x = _avoid_pool_ties(x, spec.p, spec.q, margin=0.05)
    dy = Tensor(rng.uniform(-1, 1, (2, 2, 2)))

    def J():
        y, _ = L.pool_forward(spec, Tensor(x))
        return float((dy.data * y.data).sum())

    _, cache = L.pool_forward(spec, Tensor(x))
    dx = L.pool_backward(spec, cache, dy)
    return CheckResult(f"{mode}_pool", _rel_err(dx.data, _numeric_grad(J, x, eps)), tol)


def check_max_pool(rng, eps, tol):
    return _check_pool("max", rng, eps, tol)


def check_avg_pool(rng, eps, tol):
    return _check_pool("average", rng, eps, tol)


def check_global_avg_pool(rng: Rng, eps: float, tol: float) -> CheckResult:
    x = rng.uniform(-1, 1, (3, 4, 5))
    dy = Tensor(rng.uniform(-1, 1, (3,)))

    def J():
        y, _ = L.global_avg_pool(Tensor(x))
        return float((dy.data * y.data).sum())

    _, cache = L.global_avg_pool(Tensor(x))
    dx = L.global_avg_pool_backward(cache, dy)
    return CheckResult("global_avg_pool", _rel_err(dx.data, _numeric_grad(J, x, eps)), tol)


def check_relu(rng: Rng, eps: float, tol: float) -> CheckResult:
    x = _avoid_relu_kinks(rng.uniform(-1, 1, (3, 4, 5)), margin=0.05)
    dy = Tensor(rng.uniform(-1, 1, (3, 4, 5)))

    def J():
        y, _ = L.relu(Tensor(x))
        return float((dy.data * y.data).sum())

    _, cache = L.relu(Tensor(x))
    dx = L.relu_backward(cache, dy)
    return CheckResult("relu", _rel_err(dx.data, _numeric_grad(J, x, eps)), tol)


def check_sigmoid(rng: Rng, eps: float, tol: float) -> CheckResult:
    x = rng.uniform(-3, 3, (3, 4, 5))
    dy = Tensor(rng.uniform(-1, 1, (3, 4, 5)))

    def J():
        y, _ = L.sigmoid(Tensor(x))
        return float((dy.data * y.data).sum())

    _, cache = L.sigmoid(Tensor(x))
    dx = L.sigmoid_backward(cache, dy)
    return CheckResult("sigmoid", _rel_err(dx.data, _numeric_grad(J, x, eps)), tol)


def check_dense(rng: Rng, eps: float, tol: float) -> CheckResult:
    layer = L.make_dense_layer(5, 4, rng=rng, dtype=np.float64)
    x = rng.uniform(-1, 1, (5,))
    dy = Tensor(rng.uniform(-1, 1, (4,)))

    def J():
        y, _ = L.dense_forward(layer, Tensor(x))
        return float((dy.data * y.data).sum())

    _, cache = L.dense_forward(layer, Tensor(x))
    dx, dw, db = L.dense_backward(layer, cache, dy)
    errs = [
        _rel_err(dx.data, _numeric_grad(J, x, eps)),
        _rel_err(dw.data, _numeric_grad(J, layer.weights.data, eps)),
        _rel_err(db.data, _numeric_grad(J, layer.biases.data, eps)),
    ]
    return CheckResult("dense", max(errs), tol)


def check_softmax_cross_entropy(rng: Rng, eps: float, tol: float) -> CheckResult:
    logits = rng.uniform(-2, 2, (2,))
    label = 1

    def J():
        loss, _ = T.softmax_cross_entropy(Tensor(logits), label)
        return loss

    _, dlogits = T.softmax_cross_entropy(Tensor(logits), label)
    return CheckResult("softmax_cross_entropy",
                       _rel_err(dlogits.data, _numeric_grad(J, logits, eps)), tol)


def _micro_net_inputs(rng: Rng, eps: float):
    """A micro net + input with all kinks clear of the finite-difference step."""
    config = N.ModelConfig(input_shape=(1, 12, 14),
                           layers=[N.conv(2, 3, 3), N.activation("relu"),
                                   N.pool(2, 2, "max"), N.global_avg_pool(),
                                   N.softmax_output(2)])
    # A single +-eps perturbation of one scalar moves any conv output by at
    # most ~eps, so a margin of a few eps guarantees no kink is crossed.
    margin = max(4 * eps, 1e-5)
    for attempt in range(200):
        sub = rng.child(f"micronet{attempt}")
        net = N.build_network(config, sub, dtype=np.float64)
        x = Tensor(sub.uniform(0.05, 1.0, (1, 12, 14)))
        conv_out, _ = L.conv_forward(net.steps[0][1], x)
        if np.abs(conv_out.data).min() < margin:
            continue
        relu_out = np.maximum(conv_out.data, 0)
        windows = L._pool_windows(relu_out, 2, 2)
        gaps = np.sort(windows, axis=3)
        if (gaps[..., -1] - gaps[..., -2]).min() < margin:
            continue
        return net, x
    raise RuntimeError("could not find a kink-free micro net configuration")


def check_end_to_end(rng: Rng, eps: float, tol: float) -> CheckResult:
    """Loss gradient w.r.t. every parameter of a small conv-pool-gap network."""
    net, x = _micro_net_inputs(rng, eps)
    label = 0

    def loss_value():
        logits, _ = net.forward_logits(x)
        return T.softmax_cross_entropy(logits, label)[0]

    logits, caches = net.forward_logits(x)
    _, dlogits = T.softmax_cross_entropy(logits, label)
    grads = net.backward(caches, dlogits)

    worst = 0.0
    for name, tensor in net.parameters():
        numeric = _numeric_grad(loss_value, tensor.data, eps)
        worst = max(worst, _rel_err(grads[name].data, numeric))
    return CheckResult("end_to_end", worst, tol)


ALL_CHECKS = [
    check_conv,
    check_max_pool,
    check_avg_pool,
    check_global_avg_pool,
    check_relu,
    check_sigmoid,
    check_dense,
    check_softmax_cross_entropy,
    check_end_to_end,
]


def run_all(seed: int = 0, eps: float = 1e-5, tol: float = DEFAULT_TOLERANCE) -> list[CheckResult]:
    root = Rng(seed)
    return [chk(root.child(chk.__name__), eps, tol) for chk in ALL_CHECKS]
