"""Training loop over in-memory or disk-backed batch sources.

Sources hold unit-scale images and apply (optional) affine augmentation and
the per-handle normalization just before each batch is emitted, so the
augmented pixels see the same statistics a clean image would. Augmentation
streams are keyed by (epoch, item index): reproducible and independent of
batch order.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .. import imaging
from ..dataset import LabeledCorpus, one_hot
from ..rng import substream
from .network import Network, cross_entropy, cross_entropy_grad_logits, forward, backward
from .optim import OptimizerSpec, make_optimizer


class ArraySource:
    """A partition held in memory as unit-scale (N, 3, h, w) images."""

    def __init__(self, images: np.ndarray, labels: np.ndarray, num_classes: int,
                 batch_size: int = 32, shuffle: bool = False,
                 augment: imaging.AugmentationSpec = None,
                 constants: imaging.NormalizationConstants = imaging.IDENTITY,
                 seed: int = 0):
        self.images = np.asarray(images, dtype=np.float64)
        self.labels = np.asarray(labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise ValueError("images/labels length mismatch")
        self.num_classes = num_classes
        self.batch_size = batch_size
        self.shuffle = shuffle
        self.augment = augment
        self.constants = constants
        self.seed = seed

    def __len__(self):
        return len(self.images)

    def _normalize(self, batch: np.ndarray) -> np.ndarray:
        mean = np.asarray(self.constants.mean)[None, :, None, None]
        std = np.asarray(self.constants.std)[None, :, None, None]
        return (batch - mean) / std

    def batches(self, epoch: int = 0):
        order = np.arange(len(self.images))
        if self.shuffle:
            order = substream(self.seed, "order", epoch).permutation(order)
        for start in range(0, len(order), self.batch_size):
            idx = order[start : start + self.batch_size]
            batch = self.images[idx]
            if self.augment is not None:
                batch = np.stack([
                    imaging.augment_image(
                        imaging.ImageTensor(batch[k], imaging.RangeTag.UNIT),
                        self.augment,
                        imaging.augmentation_stream(self.augment, epoch, int(gi)),
                    ).data
                    for k, gi in enumerate(idx)
                ])
            yield self._normalize(batch), one_hot(self.labels[idx], self.num_classes)


def source_from_partition(corpus: LabeledCorpus, indices,
                          pre: imaging.PreprocessSpec = imaging.DEFAULT_PREPROCESS,
                          batch_size: int = 32, shuffle: bool = False,
                          augment: imaging.AugmentationSpec = None,
                          seed: int = 0) -> ArraySource:
    """Decode + resize/crop/scale every partition file once into memory.

    Desk-scale by design: a few thousand small images. Unreadable files are
    skipped with a warning.
    """
    images, labels = [], []
    for i in indices:
        path, label = corpus.items[i]
        try:
            unit = imaging.preprocess_unit(imaging.load_image(path), pre)
        except Exception as exc:  # noqa: BLE001 - skip-and-warn contract
            warnings.warn(f"skipping unreadable {path}: {exc}", stacklevel=2)
            continue
        images.append(unit.data)
        labels.append(label)
    return ArraySource(
        np.stack(images), np.array(labels), corpus.num_classes,
        batch_size=batch_size, shuffle=shuffle, augment=augment,
        constants=pre.constants, seed=seed,
    )


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainingHistory:
    epochs: list = field(default_factory=list)
    best_epoch: int = -1

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("epoch,train_loss,train_acc,val_loss,val_acc\n")
            for e in self.epochs:
                fh.write(f"{e.epoch},{e.train_loss:.6f},{e.train_acc:.6f},"
                         f"{e.val_loss:.6f},{e.val_acc:.6f}\n")


def _accuracy(probs: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(probs.argmax(axis=1) == y.argmax(axis=1)))


def evaluate_source(net: Network, source: ArraySource, epoch: int = 0):
    """Eval-mode loss/accuracy over one pass (no augmentation intended here)."""
    losses, accs, weights = [], [], []
    for x, y in source.batches(epoch):
        tape = forward(net, x, train_mode=False)
        losses.append(cross_entropy(tape.probs, y))
        accs.append(_accuracy(tape.probs, y))
        weights.append(len(x))
    w = np.array(weights, dtype=np.float64)
    return float(np.average(losses, weights=w)), float(np.average(accs, weights=w))


def train(net: Network, train_source: ArraySource, val_source: ArraySource,
          opt_spec: OptimizerSpec, epochs: int, seed: int = 0, log=None):
    """Single-worker seeded training; keeps the parameter snapshot with the
    lowest validation loss. Returns (history, best_params)."""
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    opt = make_optimizer(opt_spec)
    history = TrainingHistory()
    best_loss = np.inf
    best_params = net.copy_params()
    for epoch in range(epochs):
        drop_rng = substream(seed, "dropout", epoch)
        losses, accs, weights = [], [], []
        for x, y in train_source.batches(epoch):
            tape = forward(net, x, train_mode=True, rng=drop_rng)
            loss = cross_entropy(tape.probs, y)
            grad = cross_entropy_grad_logits(tape.probs, y)
            param_grads, _ = backward(net, tape, grad, from_logits=True)
            opt.step(net.params, param_grads)
            losses.append(loss)
            accs.append(_accuracy(tape.probs, y))
            weights.append(len(x))
        w = np.array(weights, dtype=np.float64)
        val_loss, val_acc = evaluate_source(net, val_source, epoch)
        stats = EpochStats(
            epoch=epoch,
            train_loss=float(np.average(losses, weights=w)),
            train_acc=float(np.average(accs, weights=w)),
            val_loss=val_loss,
            val_acc=val_acc,
        )
        history.epochs.append(stats)
        if val_loss < best_loss:
            best_loss = val_loss
            best_params = net.copy_params()
            history.best_epoch = epoch
        if log is not None:
            log(stats)
    return history, best_params
