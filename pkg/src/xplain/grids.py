"""Experiment grids: hyperparameters, head versions, augmentations.

A grid run trains the native two-block network per cell on a class-folder
corpus and reports test metrics per cell as CSV + JSON + markdown, with an
accuracy figure rendered next to the delimited output. Every cell is fully
seeded; a finished cell leaves a JSON snapshot under ``cells/`` and is
skipped on re-runs into the same directory. Reports contain no timestamps,
so a re-run from the same config reproduces them byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataset, imaging
from .evalbench import evaluate
from .gateway import native_handle
from .nnet import OptimizerSpec, build_desknet, source_from_partition, train

LEARNING_RATES = (0.001, 0.005, 0.01)
OPTIMIZERS = ("sgd", "adam")
EPOCH_SETTINGS = (10, 20, 50)
HEAD_VERSIONS = tuple(range(9))
AUGMENTATIONS = ("none", "aug1", "aug2")

GRID_KINDS = ("hyper", "heads", "aug")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_root: str
    seed: int = 0
    split_seed: int = 0
    balanced: bool = False
    head_version: int = 0
    augmentation: str = "none"
    learning_rate: float = 0.001
    optimizer: str = "sgd"
    epochs: int = 10
    batch_size: int = 32
    resize: tuple = (256, 256)
    crop: tuple = (224, 224)

    def __post_init__(self):
        if self.augmentation not in AUGMENTATIONS:
            raise ValueError(f"augmentation must be one of {AUGMENTATIONS}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def preprocess_spec(self) -> imaging.PreprocessSpec:
        return imaging.PreprocessSpec(resize=tuple(self.resize), crop=tuple(self.crop))

    def augmentation_spec(self):
        if self.augmentation == "none":
            return None
        base = imaging.AUG1 if self.augmentation == "aug1" else imaging.AUG2
        return dataclasses.replace(base, seed=self.seed)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["resize"] = list(self.resize)
        d["crop"] = list(self.crop)
        return d


def grid_cells(base: ExperimentConfig, kind: str):
    """The explicit cell list; hyper = |lr| x |optimizer| x |epochs| = 18."""
    if kind == "hyper":
        return [
            dataclasses.replace(base, learning_rate=lr, optimizer=opt, epochs=ep)
            for lr in LEARNING_RATES for opt in OPTIMIZERS for ep in EPOCH_SETTINGS
        ]
    if kind == "heads":
        return [dataclasses.replace(base, head_version=v) for v in HEAD_VERSIONS]
    if kind == "aug":
        return [dataclasses.replace(base, augmentation=a) for a in AUGMENTATIONS]
    raise ValueError(f"grid kind must be one of {GRID_KINDS}, got {kind!r}")


def _cell_slug(cfg: ExperimentConfig, kind: str) -> str:
    if kind == "hyper":
        return f"lr{cfg.learning_rate}_{cfg.optimizer}_ep{cfg.epochs}"
    if kind == "heads":
        return f"head{cfg.head_version}"
    return f"aug_{cfg.augmentation}"


def run_cell(cfg: ExperimentConfig, sources) -> dict:
    """Train one configuration and evaluate on the held-out test split."""
    train_src, val_src, test_src, class_names = sources(cfg)
    net = build_desknet((3, *cfg.crop), len(class_names),
                        head_version=cfg.head_version, seed=cfg.seed)
    opt = OptimizerSpec(cfg.optimizer, cfg.learning_rate)
    history, best_params = train(net, train_src, val_src, opt, cfg.epochs, seed=cfg.seed)
    net.load_params(best_params)
    handle = native_handle(net, class_names, constants=imaging.IMAGENET)
    _, report = evaluate(handle, test_src.batches(0))
    return {
        "accuracy": report.accuracy,
        "macro_precision": report.macro_precision,
        "macro_recall": report.macro_recall,
        "macro_f1": report.macro_f1,
        "best_epoch": history.best_epoch,
    }


class CorpusSources:
    """Loads each split partition into memory once and hands out per-cell
    batch sources (only the augmentation stream differs between cells)."""

    def __init__(self, base: ExperimentConfig):
        corpus = dataset.scan_corpus(base.dataset_root)
        plan = dataset.make_split(corpus, base.split_seed, base.balanced)
        pre = base.preprocess_spec()
        self.class_names = corpus.classes
        self._train = source_from_partition(corpus, plan.train, pre,
                                            batch_size=base.batch_size, shuffle=True,
                                            seed=base.seed)
        self._val = source_from_partition(corpus, plan.val, pre,
                                          batch_size=base.batch_size)
        self._test = source_from_partition(corpus, plan.test, pre,
                                           batch_size=base.batch_size)

    def __call__(self, cfg: ExperimentConfig):
        tr = self._train
        tr = type(tr)(tr.images, tr.labels, tr.num_classes, batch_size=cfg.batch_size,
                      shuffle=True, augment=cfg.augmentation_spec(),
                      constants=tr.constants, seed=cfg.seed)
        return tr, self._val, self._test, self.class_names


@dataclass
class GridReport:
    kind: str
    rows: list = field(default_factory=list)

    def best_index(self):
        done = [(i, r) for i, r in enumerate(self.rows) if r["status"] == "ok"]
        if not done:
            return None
        # highest accuracy; ties broken by lower learning rate, then order
        return min(done, key=lambda ir: (-ir[1]["accuracy"], ir[1]["learning_rate"], ir[0]))[0]


CSV_COLUMNS = (
    "cell", "grid", "head_version", "augmentation", "learning_rate", "optimizer",
    "epochs", "seed", "status", "accuracy", "macro_precision", "macro_recall",
    "macro_f1", "best",
)


def _format_cell_value(row: dict, col: str):
    value = row.get(col, "")
    if col in ("accuracy", "macro_precision", "macro_recall", "macro_f1"):
        return f"{value:.6f}"
    if col == "best":
        return "1" if value else "0"
    return str(value)


def write_reports(report: GridReport, out_dir: Path) -> dict:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    best = report.best_index()
    for i, row in enumerate(report.rows):
        row["best"] = i == best

    csv_path = out_dir / "report.csv"
    with open(csv_path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in report.rows:
            fh.write(",".join(_format_cell_value(row, c) for c in CSV_COLUMNS) + "\n")

    json_path = out_dir / "report.json"
    with open(json_path, "w") as fh:
        json.dump({"grid": report.kind, "rows": report.rows}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")

    md_path = out_dir / "report.md"
    with open(md_path, "w") as fh:
        fh.write(f"# Grid report: {report.kind}\n\n")
        fh.write("| cell | config | precision | recall | F1 | accuracy |\n")
        fh.write("|---|---|---|---|---|---|\n")
        for row in report.rows:
            label = row["cell"]
            mark = "**" if row["best"] else ""
            if row["status"] != "ok":
                fh.write(f"| {label} | {row['config_label']} | - | - | - | failed |\n")
                continue
            fh.write(
                f"| {label} | {row['config_label']} "
                f"| {mark}{row['macro_precision']:.3f}{mark} "
                f"| {mark}{row['macro_recall']:.3f}{mark} "
                f"| {mark}{row['macro_f1']:.3f}{mark} "
                f"| {mark}{row['accuracy']:.3f}{mark} |\n"
            )

    fig_path = out_dir / "report.png"
    accuracy_figure(report, fig_path)
    return {"csv": csv_path, "json": json_path, "markdown": md_path, "figure": fig_path}


def accuracy_figure(report: GridReport, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [r["config_label"] for r in report.rows]
    values = [r["accuracy"] if r["status"] == "ok" else 0.0 for r in report.rows]
    colors = ["#2a9d8f" if r["best"] else ("#e76f51" if r["status"] != "ok" else "#577590")
              for r in report.rows]
    fig, ax = plt.subplots(figsize=(max(6, 0.55 * len(labels)), 4))
    ax.bar(range(len(labels)), values, color=colors)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0, 1)
    ax.set_title(f"{report.kind} grid")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def run_grid(base: ExperimentConfig, kind: str, out_dir, progress=None) -> GridReport:
    cells = grid_cells(base, kind)
    out_dir = Path(out_dir)
    cell_dir = out_dir / "cells"
    cell_dir.mkdir(parents=True, exist_ok=True)
    sources = CorpusSources(base)
    report = GridReport(kind=kind)
    for i, cfg in enumerate(cells):
        slug = _cell_slug(cfg, kind)
        snapshot = cell_dir / f"cell_{i:02d}_{slug}.json"
        if snapshot.exists():
            row = json.loads(snapshot.read_text())
            row["resumed"] = True
            report.rows.append(row)
            if progress:
                progress(f"[{i + 1}/{len(cells)}] {slug}: resumed")
            continue
        row = {
            "cell": i,
            "grid": kind,
            "config_label": slug,
            "head_version": cfg.head_version,
            "augmentation": cfg.augmentation,
            "learning_rate": cfg.learning_rate,
            "optimizer": cfg.optimizer,
            "epochs": cfg.epochs,
            "seed": cfg.seed,
            "status": "ok",
            "accuracy": 0.0,
            "macro_precision": 0.0,
            "macro_recall": 0.0,
            "macro_f1": 0.0,
        }
        try:
            row.update(run_cell(cfg, sources))
        except Exception as exc:  # noqa: BLE001 - grid must survive cell failures
            row["status"] = "failed"
            row["error"] = f"{type(exc).__name__}: {exc}"
        snapshot.write_text(json.dumps(row, indent=2, sort_keys=True) + "\n")
        report.rows.append(row)
        if progress:
            progress(f"[{i + 1}/{len(cells)}] {slug}: {row['status']}"
                     + (f" acc={row['accuracy']:.3f}" if row["status"] == "ok" else ""))
    write_reports(report, out_dir)
    return report
