"""SGD/Adam updates and a one-cycle learning-rate schedule."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .autodiff import Tensor


class OneCycleSchedule:
    """Linear warmup to the peak rate, then cosine anneal toward ~0."""

    def __init__(self, peak_lr: float, total_steps: int, pct_start: float = 0.3,
                 div_factor: float = 25.0, final_div_factor: float = 1e4):
        if total_steps < 1:
            raise ValueError("total_steps must be >= 1")
        self.peak_lr = peak_lr
        self.total_steps = total_steps
        self.warmup_steps = max(1, int(round(pct_start * total_steps)))
        self.initial_lr = peak_lr / div_factor
        self.final_lr = peak_lr / final_div_factor

    def lr(self, step: int) -> float:
        if step < self.warmup_steps:
            t = step / self.warmup_steps
            return self.initial_lr + t * (self.peak_lr - self.initial_lr)
        span = max(1, self.total_steps - self.warmup_steps)
        t = min(1.0, (step - self.warmup_steps) / span)
        return self.final_lr + 0.5 * (self.peak_lr - self.final_lr) * (1.0 + math.cos(math.pi * t))


class Sgd:
    def __init__(self, params: Sequence[Tensor], lr: float = 0.01,
                 schedule: OneCycleSchedule | None = None):
        self.params = list(params)
        self.base_lr = lr
        self.schedule = schedule
        self.step_count = 0

    def step(self):
        lr = self.schedule.lr(self.step_count) if self.schedule else self.base_lr
        for p in self.params:
            if p.grad is None:
                continue
            if not np.all(np.isfinite(p.grad)):
                raise FloatingPointError("non-finite gradient in SGD step")
            p.data -= lr * p.grad
        self.step_count += 1

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class Adam:
    """Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8) with optional one-cycle."""

    def __init__(self, params: Sequence[Tensor], lr: float = 0.01,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 schedule: OneCycleSchedule | None = None):
        self.params = list(params)
        self.base_lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.schedule = schedule
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        lr = self.schedule.lr(self.step_count) if self.schedule else self.base_lr
        t = self.step_count + 1
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient in Adam step")
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / (1 - self.beta1**t)
            v_hat = self.v[i] / (1 - self.beta2**t)
            p.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
        self.step_count += 1

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def state(self) -> dict:
        return {
            "step_count": self.step_count,
            "m": [a.copy() for a in self.m],
            "v": [a.copy() for a in self.v],
        }

    def load_state(self, state: dict):
        self.step_count = int(state["step_count"])
        self.m = [np.asarray(a, dtype=float).copy() for a in state["m"]]
        self.v = [np.asarray(a, dtype=float).copy() for a in state["v"]]
