"""SGD and Adam parameter updates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str  # "sgd" | "adam"
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


class SGD:
    def __init__(self, spec: OptimizerSpec):
        self.spec = spec
        self.step_count = 0

    def step(self, params: dict, grads: dict):
        lr = self.spec.learning_rate
        self.step_count += 1
        for name, pg in grads.items():
            for slot, g in pg.items():
                params[name][slot] -= lr * g


class Adam:
    """Bias-corrected first/second moment updates."""

    def __init__(self, spec: OptimizerSpec):
        self.spec = spec
        self.step_count = 0
        self.m = {}
        self.v = {}

    def step(self, params: dict, grads: dict):
        s = self.spec
        self.step_count += 1
        t = self.step_count
        for name, pg in grads.items():
            for slot, g in pg.items():
                key = (name, slot)
                m = self.m.get(key)
                if m is None:
                    m = np.zeros_like(g)
                    self.v[key] = np.zeros_like(g)
                v = self.v[key]
                m = s.beta1 * m + (1 - s.beta1) * g
                v = s.beta2 * v + (1 - s.beta2) * g * g
                self.m[key], self.v[key] = m, v
                m_hat = m / (1 - s.beta1**t)
                v_hat = v / (1 - s.beta2**t)
                params[name][slot] -= s.learning_rate * m_hat / (np.sqrt(v_hat) + s.eps)


def make_optimizer(spec: OptimizerSpec):
    return SGD(spec) if spec.kind == "sgd" else Adam(spec)
