"""End-to-end training loop for the toy detector."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data_io import LabeledScene
from .detector import Detector, DetectorConfig
from .errors import NumericError
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.losses import LossBreakdown
from .nn.optim import Adam, OneCycleSchedule


def save_detector_checkpoint(path, detector: Detector, optimizer: Optional[Adam] = None,
                             step: int = 0, total_steps: int = 0, peak_lr: float = 0.0,
                             train_seed: int = 0) -> None:
    arrays = detector.state_arrays()
    if optimizer is not None:
        names = sorted(detector.params)
        for name, m, v in zip(names, optimizer.m, optimizer.v):
            arrays[f"opt.m.{name}"] = m
            arrays[f"opt.v.{name}"] = v
    meta = {
        "config": detector.config.to_dict(),
        "step": step,
        "total_steps": total_steps,
        "peak_lr": peak_lr,
        "train_seed": train_seed,
    }
    save_checkpoint(path, arrays, meta)


def load_detector_checkpoint(path) -> tuple[Detector, dict, dict]:
    arrays, meta = load_checkpoint(path)
    config = DetectorConfig.from_dict(meta["config"])
    detector = Detector(config, seed=0)
    model_arrays = {k: v for k, v in arrays.items() if not k.startswith("opt.")}
    opt_arrays = {k: v for k, v in arrays.items() if k.startswith("opt.")}
    detector.load_state_arrays(model_arrays)
    return detector, meta, opt_arrays


def train_detector(
    scenes: Sequence[LabeledScene],
    config: Optional[DetectorConfig] = None,
    steps: int = 500,
    seed: int = 0,
    peak_lr: float = 2e-3,
    log_path=None,
    detector: Optional[Detector] = None,
    optimizer_state: Optional[dict[str, np.ndarray]] = None,
    start_step: int = 0,
    total_steps: Optional[int] = None,
) -> tuple[Detector, Adam, list[LossBreakdown]]:
    """Adam with a one-cycle schedule; scenes cycle round-robin per step.

    Deterministic under a fixed seed. Non-finite losses abort with the
    offending component named.
    """
    if detector is None:
        detector = Detector(config, seed=seed)
    total = total_steps if total_steps is not None else start_step + steps
    schedule = OneCycleSchedule(peak_lr, max(1, total))
    opt = Adam(detector.parameters(), lr=peak_lr, schedule=schedule)
    if optimizer_state is not None:
        names = sorted(detector.params)
        opt.m = [optimizer_state[f"opt.m.{n}"].copy() for n in names]
        opt.v = [optimizer_state[f"opt.v.{n}"].copy() for n in names]
        opt.step_count = start_step

    # Parameters in sorted-name order so optimizer state aligns by position.
    opt.params = [detector.params[n] for n in sorted(detector.params)]
    opt.m = opt.m if optimizer_state is not None else [np.zeros_like(p.data) for p in opt.params]
    opt.v = opt.v if optimizer_state is not None else [np.zeros_like(p.data) for p in opt.params]
    opt.step_count = start_step

    log_f = open(log_path, "a") if log_path else None
    breakdowns: list[LossBreakdown] = []
    try:
        for step in range(start_step, start_step + steps):
            scene = scenes[step % len(scenes)]
            state = detector.forward(scene.cloud, seed=seed + step)
            loss, breakdown = detector.compute_losses(scene, state)
            for name, value in breakdown.as_dict().items():
                if not math.isfinite(value):
                    raise NumericError(f"non-finite loss component {name!r} at step {step}")
            detector.zero_grad()
            loss.backward()
            opt.step()
            breakdowns.append(breakdown)
            if log_f:
                rec = {"step": step, **breakdown.as_dict()}
                log_f.write(json.dumps(rec) + "\n")
    finally:
        if log_f:
            log_f.close()
    return detector, opt, breakdowns
