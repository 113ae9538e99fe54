"""Experiment configuration: schema-versioned JSON, fully reproducible runs."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data_io import AugmentConfig, LabeledScene, SceneGenSpec, generate_scene, list_frames, load_scene
from .detector import ContextConfig, DetectorConfig, kitti_config, toy_config
from .errors import ConfigError

SCHEMA_ID = "pointdet/v1"

#: Environment variables may override paths only.
ENV_OUT = "POINTDET_OUT"
ENV_DATA = "POINTDET_DATA"


@dataclass
class ExperimentConfig:
    seed: int = 0
    schedule: list[tuple[str, int]] = field(
        default_factory=lambda: [("d-fps", 4096), ("d-fps", 1024),
                                 ("ctr-aware", 512), ("ctr-aware", 256)]
    )
    strategies: list[str] = field(
        default_factory=lambda: ["random", "d-fps", "feat-fps", "ctr-aware"]
    )
    scene_dir: Optional[str] = None
    scene_gen: Optional[SceneGenSpec] = None
    num_scenes: int = 4
    detector: str | dict = "toy"
    context: Optional[ContextConfig] = None
    augment: Optional[AugmentConfig] = None
    train_steps: int = 500
    peak_lr: float = 2e-3
    iou_thresholds: tuple[float, ...] = (0.7, 0.5, 0.5)
    ap_positions: int = 40
    bench_sizes: tuple[int, ...] = (16384,)
    bench_k: int = 512
    min_recall_points: int = 1
    out: Optional[str] = None

    def detector_config(self) -> DetectorConfig:
        if self.detector == "toy":
            cfg = toy_config(self.context)
        elif self.detector == "kitti":
            cfg = kitti_config()
            if self.context is not None:
                cfg.context = self.context
        elif isinstance(self.detector, dict):
            cfg = DetectorConfig.from_dict(self.detector)
        else:
            raise ConfigError(f"unknown detector preset {self.detector!r}")
        return cfg


def load_experiment_config(path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    schema = raw.pop("schema", None)
    if schema != SCHEMA_ID:
        raise ConfigError(
            f"{path}: schema id {schema!r} is not {SCHEMA_ID!r}; refusing to reinterpret"
        )
    return experiment_from_dict(raw, where=str(path))


def experiment_from_dict(raw: dict, where: str = "<config>") -> ExperimentConfig:
    cfg = ExperimentConfig()
    known = set(cfg.__dataclass_fields__)
    for key in raw:
        if key not in known:
            raise ConfigError(f"{where}: unknown config key {key!r}")
    data = dict(raw)
    if "schedule" in data:
        try:
            data["schedule"] = [(str(s), int(k)) for s, k in data["schedule"]]
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: schedule must be a list of [strategy, k] pairs")
    if "scene_gen" in data and data["scene_gen"] is not None:
        sg = dict(data["scene_gen"])
        if "instances_per_class" in sg:
            sg["instances_per_class"] = tuple(tuple(x) for x in sg["instances_per_class"])
        if "points_per_instance" in sg:
            sg["points_per_instance"] = tuple(sg["points_per_instance"])
        if "mean_sizes" in sg:
            sg["mean_sizes"] = np.asarray(sg["mean_sizes"], dtype=float)
        data["scene_gen"] = SceneGenSpec(**sg)
    if "context" in data and data["context"] is not None:
        data["context"] = ContextConfig(**data["context"])
    if "augment" in data and data["augment"] is not None:
        ac = dict(data["augment"])
        for key in ("rotation_range", "scale_range", "paste_counts"):
            if key in ac:
                ac[key] = tuple(ac[key])
        data["augment"] = AugmentConfig(**ac)
    for key in ("iou_thresholds", "bench_sizes"):
        if key in data:
            data[key] = tuple(data[key])
    try:
        return ExperimentConfig(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}")


def resolve_out(cfg: ExperimentConfig, cli_out: Optional[str]) -> str:
    out = cli_out or os.environ.get(ENV_OUT) or cfg.out
    if out is None:
        raise ConfigError("no output path: pass --out, set POINTDET_OUT, or set 'out'")
    return out


def scenes_from_config(cfg: ExperimentConfig, seed_offset: int = 0) -> list[LabeledScene]:
    scene_dir = os.environ.get(ENV_DATA) or cfg.scene_dir
    if scene_dir is not None:
        frames = list_frames(scene_dir)
        if not frames:
            raise ConfigError(f"no scene frames found in {scene_dir}")
        return [load_scene(scene_dir, f) for f in frames]
    base = cfg.scene_gen or SceneGenSpec()
    scenes = []
    for i in range(cfg.num_scenes):
        spec = SceneGenSpec(
            extent=base.extent,
            background_points=base.background_points,
            instances_per_class=base.instances_per_class,
            mean_sizes=base.mean_sizes,
            size_spread=base.size_spread,
            points_per_instance=base.points_per_instance,
            noise=base.noise,
            seed=cfg.seed + seed_offset + i,
        )
        scenes.append(generate_scene(spec, frame_id=str(i)))
    return scenes
