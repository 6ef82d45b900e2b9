"""Softmax cross-entropy, minibatch SGD, and the training loop.

Per-sample gradients inside a batch are averaged (not summed), so the
learning rate is independent of batch size. The final short batch of an
epoch is kept. Shuffling draws from a per-epoch child stream of the run
seed, so runs are bitwise reproducible; with --threads > 1 per-sample work
is parallel but gradients are still reduced in index order, preserving
determinism.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, TrainingDiverged
from .network import Network
from .tensor import Rng, Tensor


@dataclass
class SGDConfig:
    learning_rate: float = 0.001
    batch_size: int = 128
    epochs: int = 100
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)          # per-epoch mean loss
    accuracies: list[float] = field(default_factory=list)      # per-epoch train accuracy, percent
    epoch_seconds: list[float] = field(default_factory=list)


def softmax_cross_entropy(logits: Tensor, label: int) -> tuple[float, Tensor]:
    """Loss -log softmax(logits)[label] and its gradient w.r.t. the logits.

    Uses the max-subtracted form, so large logits cannot overflow.
    """
    z = logits.data - logits.data.max()
    e = np.exp(z)
    p = e / e.sum()
    loss = float(np.log(e.sum()) - z[label])
    dlogits = p.copy()
    dlogits[label] -= 1.0
    return loss, Tensor(dlogits)


def sgd_step(params: Tensor, grads: Tensor, lr: float) -> Tensor:
    """One descent step: theta' = theta - lr * g (pure, returns a new tensor)."""
    if params.shape != grads.shape:
        raise ShapeError(f"sgd_step shape mismatch: params {params.shape} vs grads {grads.shape}")
    return Tensor(params.data - lr * grads.data)


def apply_gradients(net: Network, grads: dict[str, np.ndarray], lr: float):
    for name, tensor in net.parameters():
        net.set_parameter(name, sgd_step(tensor, Tensor(grads[name]), lr))


def _sample_pass(net: Network, x: Tensor, label: int):
    """Forward + backward for one sample: (loss, correct, grads)."""
    logits, caches = net.forward_logits(x)
    loss, dlogits = softmax_cross_entropy(logits, label)
    grads = net.backward(caches, dlogits)
    correct = int(np.argmax(logits.data)) == label
    return loss, correct, grads


def train(net: Network, trainset, cfg: SGDConfig) -> TrainReport:
    """Minibatch SGD over (input tensor, label) pairs, cfg.epochs epochs."""
    samples = list(trainset)
    if not samples:
        raise ValueError("training set is empty")
    for x, _label in samples:
        if x.shape != net.config.input_shape:
            raise ShapeError(f"sample shape {x.shape} does not match network input "
                             f"{net.config.input_shape}")

    rng = Rng(cfg.seed)
    report = TrainReport()
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        for epoch in range(cfg.epochs):
            start = time.perf_counter()
            order = rng.child(f"epoch{epoch}").permutation(len(samples))
            loss_sum = 0.0
            n_correct = 0
            for batch_no, lo in enumerate(range(0, len(order), cfg.batch_size)):
                batch = [samples[i] for i in order[lo:lo + cfg.batch_size]]
                if pool is not None:
                    results = list(pool.map(lambda s: _sample_pass(net, s[0], s[1]), batch))
                else:
                    results = [_sample_pass(net, x, label) for x, label in batch]

                batch_grads = None
                for loss, correct, grads in results:     # fixed index order
                    if not np.isfinite(loss):
                        raise TrainingDiverged(
                            f"non-finite loss at epoch {epoch}, batch {batch_no}")
                    loss_sum += loss
                    n_correct += correct
                    if batch_grads is None:
                        batch_grads = {k: g.data.copy() for k, g in grads.items()}
                    else:
                        for k, g in grads.items():
                            batch_grads[k] += g.data
                for k in batch_grads:
                    batch_grads[k] /= len(batch)
                apply_gradients(net, batch_grads, cfg.learning_rate)

            report.losses.append(loss_sum / len(samples))
            report.accuracies.append(100.0 * n_correct / len(samples))
            report.epoch_seconds.append(time.perf_counter() - start)
    finally:
        if pool is not None:
            pool.shutdown()
    return report
