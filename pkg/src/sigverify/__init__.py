"""Offline signature verification: from-scratch CNN and FCN training/evaluation."""

from .tensor import Rng, Tensor
from .network import (ModelConfig, Network, build_network, default_cnn_config,
                      default_fcn_config, load_checkpoint, param_count, save_checkpoint)
from .training import SGDConfig, TrainReport, softmax_cross_entropy, sgd_step, train
from .data import (DatasetCatalog, DatasetSplit, SignatureImage, SynthConfig,
                   load_image, read_manifest, resize, split_dataset, synth_generate)
from .evaluation import ConfusionCounts, MetricsRow, accuracy, evaluate, far, frr, report

__version__ = "0.1.0"
