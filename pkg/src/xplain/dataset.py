"""Class-folder corpus ingestion, seeded stratified splitting, and batching.

A corpus is a directory with one subdirectory per class, each holding
images. Class order is the sorted folder-name order and fixes the
label-index <-> class-name map everywhere downstream. Splits cut each class
80/10/10 with floor rounding (remainder to test) after a per-class seeded
shuffle of the path-sorted items, so the plan only depends on (file set,
seed), never on scan order.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imaging
from .errors import ClassTooSmall, EmptyClass, NoClasses
from .rng import substream

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png"}

SPLIT_FRACTIONS = (0.8, 0.1, 0.1)
MIN_CLASS_ITEMS = 10


@dataclass
class LabeledCorpus:
    classes: list
    items: list  # (path str, class index), lexicographically sorted within class
    counts: list

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def class_indices(self, class_index: int) -> list:
        return [i for i, (_, c) in enumerate(self.items) if c == class_index]


def scan_corpus(root) -> LabeledCorpus:
    root = Path(root)
    if not root.is_dir():
        raise NoClasses(f"corpus root {root} is not a directory")
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise NoClasses(f"no class folders under {root}")
    classes = [d.name for d in class_dirs]
    items = []
    counts = []
    for ci, d in enumerate(class_dirs):
        files = sorted(
            str(p) for p in d.iterdir()
            if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
        )
        if not files:
            raise EmptyClass(f"class folder {d} contains no images")
        items.extend((f, ci) for f in files)
        counts.append(len(files))
    return LabeledCorpus(classes=classes, items=items, counts=counts)


@dataclass
class SplitPlan:
    train: list
    val: list
    test: list
    fractions: tuple = SPLIT_FRACTIONS
    seed: int = 0
    balanced: bool = False

    def partition(self, name: str) -> list:
        return {"train": self.train, "val": self.val, "test": self.test}[name]


def split_counts(n: int) -> tuple:
    """floor(0.8 n) train, floor(0.1 n) val, remainder test."""
    n_train = int(np.floor(SPLIT_FRACTIONS[0] * n))
    n_val = int(np.floor(SPLIT_FRACTIONS[1] * n))
    return n_train, n_val, n - n_train - n_val


def make_split(corpus: LabeledCorpus, seed: int, balanced: bool = False) -> SplitPlan:
    """Per-class shuffle-then-cut. With ``balanced`` the train lists are
    truncated to the smallest per-class train count (val/test untouched)."""
    per_class_train = []
    val: list = []
    test: list = []
    for ci in range(corpus.num_classes):
        idxs = corpus.class_indices(ci)
        idxs.sort(key=lambda i: corpus.items[i][0])
        if len(idxs) < MIN_CLASS_ITEMS:
            raise ClassTooSmall(
                f"class {corpus.classes[ci]!r} has {len(idxs)} items, needs >= {MIN_CLASS_ITEMS}"
            )
        order = substream(seed, "split", ci).permutation(len(idxs))
        shuffled = [idxs[j] for j in order]
        n_train, n_val, _ = split_counts(len(idxs))
        per_class_train.append(shuffled[:n_train])
        val.extend(shuffled[n_train : n_train + n_val])
        test.extend(shuffled[n_train + n_val :])
    if balanced:
        floor = min(len(t) for t in per_class_train)
        per_class_train = [t[:floor] for t in per_class_train]
    train = [i for t in per_class_train for i in t]
    return SplitPlan(train=train, val=val, test=test, seed=seed, balanced=balanced)


def labels_for(corpus: LabeledCorpus, indices) -> np.ndarray:
    return np.array([corpus.items[i][1] for i in indices], dtype=np.int64)


# --- split manifest (JSON) --------------------------------------------------


def split_manifest(corpus: LabeledCorpus, plan: SplitPlan) -> dict:
    def per_class(indices):
        out = {name: [] for name in corpus.classes}
        for i in sorted(indices):
            path, ci = corpus.items[i]
            out[corpus.classes[ci]].append(path)
        return out

    return {
        "seed": plan.seed,
        "fractions": list(plan.fractions),
        "balanced": plan.balanced,
        "classes": corpus.classes,
        "partitions": {
            "train": per_class(plan.train),
            "val": per_class(plan.val),
            "test": per_class(plan.test),
        },
    }


def save_split_manifest(path, corpus: LabeledCorpus, plan: SplitPlan) -> dict:
    manifest = split_manifest(corpus, plan)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def plan_from_manifest(corpus: LabeledCorpus, manifest: dict) -> SplitPlan:
    index_of = {path: i for i, (path, _) in enumerate(corpus.items)}

    def gather(part):
        idxs = []
        for cls in manifest["classes"]:
            for path in manifest["partitions"][part][cls]:
                idxs.append(index_of[path])
        return idxs

    return SplitPlan(
        train=gather("train"),
        val=gather("val"),
        test=gather("test"),
        fractions=tuple(manifest["fractions"]),
        seed=manifest["seed"],
        balanced=manifest["balanced"],
    )


# --- batch iteration ---------------------------------------------------------


def default_loader(path: str) -> np.ndarray:
    """Decode and run the full preprocessing chain; returns (3, 224, 224)."""
    return imaging.preprocess(imaging.load_image(path)).data


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


class BatchIterator:
    """Yields (image batch, one-hot label batch) over a partition.

    Every index is visited once per pass; the final short batch is emitted.
    Unreadable files are skipped with a warning and counted in ``skipped``.
    """

    def __init__(self, corpus: LabeledCorpus, indices, batch_size: int,
                 shuffle_seed=None, loader=default_loader):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.corpus = corpus
        self.indices = list(indices)
        self.batch_size = batch_size
        self.shuffle_seed = shuffle_seed
        self.loader = loader
        self.skipped = 0

    def _order(self):
        order = sorted(self.indices, key=lambda i: self.corpus.items[i][0])
        if self.shuffle_seed is not None:
            perm = substream(self.shuffle_seed, "batch-order").permutation(len(order))
            order = [order[j] for j in perm]
        return order

    def __iter__(self):
        num_classes = self.corpus.num_classes
        pending_x, pending_y = [], []
        for i in self._order():
            path, label = self.corpus.items[i]
            try:
                arr = self.loader(path)
            except Exception as exc:  # noqa: BLE001 - skip-and-count contract
                self.skipped += 1
                warnings.warn(f"skipping unreadable {path}: {exc}", stacklevel=2)
                continue
            pending_x.append(arr)
            pending_y.append(label)
            if len(pending_x) == self.batch_size:
                yield np.stack(pending_x), one_hot(np.array(pending_y), num_classes)
                pending_x, pending_y = [], []
        if pending_x:
            yield np.stack(pending_x), one_hot(np.array(pending_y), num_classes)


def iterate_batches(corpus: LabeledCorpus, indices, batch_size: int,
                    shuffle_seed=None, loader=default_loader) -> BatchIterator:
    return BatchIterator(corpus, indices, batch_size, shuffle_seed, loader)
