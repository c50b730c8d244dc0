"""Adam with a plateau-halving learning-rate schedule."""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class PlateauSchedule:
    """Halve the rate after ``patience`` epochs without improvement; stop after ``stop_after``.

    ``mode`` is ``"max"`` for accuracy-like metrics and ``"min"`` for errors.
    """

    def __init__(self, optimizer, mode="max", patience=5, stop_after=15, factor=0.5, min_lr=1e-6):
        self.opt = optimizer
        self.mode = mode
        self.patience, self.stop_after = patience, stop_after
        self.factor, self.min_lr = factor, min_lr
        self.best = -np.inf if mode == "max" else np.inf
        self.since_best = 0
        self.since_cut = 0

    def better(self, value) -> bool:
        return value > self.best if self.mode == "max" else value < self.best

    def update(self, value) -> bool:
        """Record a validation value; returns True when it is a new best."""
        if self.better(value):
            self.best = value
            self.since_best = 0
            self.since_cut = 0
            return True
        self.since_best += 1
        self.since_cut += 1
        if self.since_cut >= self.patience:
            self.opt.lr = max(self.opt.lr * self.factor, self.min_lr)
            self.since_cut = 0
        return False

    @property
    def should_stop(self) -> bool:
        return self.since_best >= self.stop_after
