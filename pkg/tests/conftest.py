"""Shared fixtures. The overfit smoke run is trained once per session and
reused by the acceptance criterion and the loss-trend invariant test."""

import pytest

from sigverify.data import SynthConfig, load_samples, synth_generate
from sigverify.network import build_network, default_fcn_config
from sigverify.tensor import Rng
from sigverify.training import SGDConfig, train

# Pinned smoke configuration: a 32-image two-style corpus and a reduced-input
# FCN. Hyperparameters were fixed after a first exploratory run confirmed the
# two styles are separable at this setting.
SMOKE_SYNTH = dict(persons=1, genuine=16, simple=16, skilled=0, opposite=0,
                   canvas_h=54, canvas_w=72, seed=11)
SMOKE_SGD = dict(learning_rate=0.05, batch_size=32, epochs=150, seed=1)
SMOKE_INPUT = (1, 54, 72)


@pytest.fixture(scope="session")
def smoke_run(tmp_path_factory):
    """(train report, trained net, wall seconds) for the pinned overfit run."""
    import time
    corpus = tmp_path_factory.mktemp("smoke_corpus")
    catalog = synth_generate(SynthConfig(**SMOKE_SYNTH), corpus)
    images = load_samples(catalog.entries)
    trainset = [(img.pixels, img.label) for img in images]
    assert len(trainset) == 32
    net = build_network(default_fcn_config(SMOKE_INPUT), Rng(SMOKE_SGD["seed"]))
    start = time.perf_counter()
    report = train(net, trainset, SGDConfig(**SMOKE_SGD))
    elapsed = time.perf_counter() - start
    return report, net, elapsed


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """A small synthetic corpus (no split guarantees) for CLI train/eval tests."""
    out = tmp_path_factory.mktemp("tiny_corpus")
    synth_generate(SynthConfig(persons=1, genuine=4, simple=4, skilled=1, opposite=1,
                               canvas_h=36, canvas_w=48, seed=21), out)
    return out


@pytest.fixture(scope="session")
def splittable_corpus(tmp_path_factory):
    """A corpus large enough for the 25+25 split protocol."""
    out = tmp_path_factory.mktemp("split_corpus")
    synth_generate(SynthConfig(persons=2, genuine=27, simple=25, skilled=1, opposite=1,
                               canvas_h=36, canvas_w=48, seed=31), out)
    return out
