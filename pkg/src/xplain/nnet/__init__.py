"""Desk-scale neural network with explicit forward tapes and true gradients."""

from .layers import LayerSpec, conv2d, dense, dropout, flatten, maxpool, relu, softmax
from .network import Network, Tape, backward, cross_entropy, cross_entropy_grad_logits, cross_entropy_grad_probs, forward
from .heads import build_desknet, build_head
from .optim import Adam, OptimizerSpec, SGD, make_optimizer
from .train import ArraySource, EpochStats, TrainingHistory, evaluate_source, source_from_partition, train
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "LayerSpec", "conv2d", "dense", "dropout", "flatten", "maxpool", "relu", "softmax",
    "Network", "Tape", "forward", "backward",
    "cross_entropy", "cross_entropy_grad_logits", "cross_entropy_grad_probs",
    "build_head", "build_desknet",
    "OptimizerSpec", "SGD", "Adam", "make_optimizer",
    "ArraySource", "EpochStats", "TrainingHistory", "train", "evaluate_source",
    "source_from_partition",
    "save_checkpoint", "load_checkpoint",
]
