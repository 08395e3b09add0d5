"""Training-curve figure rendered next to the history CSV."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def history_figure(history, path):
    epochs = [e.epoch for e in history.epochs]
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax_loss.plot(epochs, [e.train_loss for e in history.epochs], label="train")
    ax_loss.plot(epochs, [e.val_loss for e in history.epochs], label="val")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("cross-entropy loss")
    ax_loss.legend()
    ax_acc.plot(epochs, [e.train_acc for e in history.epochs], label="train")
    ax_acc.plot(epochs, [e.val_acc for e in history.epochs], label="val")
    if history.best_epoch >= 0:
        ax_acc.axvline(history.best_epoch, color="gray", linestyle=":",
                       label=f"best val loss (epoch {history.best_epoch})")
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("accuracy")
    ax_acc.set_ylim(0, 1.02)
    ax_acc.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
