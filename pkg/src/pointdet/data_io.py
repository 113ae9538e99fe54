"""Dataset ingestion, label formats, synthetic scene generation, augmentation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import geometry
from .errors import DataError
from .geometry import Box7
from .sampling import PointCloud

#: Default synthetic class catalog; size means are stand-ins for
#: car/pedestrian/cyclist scale ratios, not dataset statistics.
CLASS_NAMES = ("Car", "Pedestrian", "Cyclist")
DEFAULT_MEAN_SIZES = np.array(
    [
        [4.0, 1.7, 1.6],
        [0.8, 0.6, 1.7],
        [1.8, 0.6, 1.7],
    ]
)


def class_id_of(name: str, catalog: Sequence[str] = CLASS_NAMES) -> int:
    try:
        return catalog.index(name) if isinstance(catalog, list) else list(catalog).index(name)
    except ValueError:
        raise DataError(f"unknown class name {name!r}; known: {list(catalog)}")


@dataclass
class LabeledScene:
    cloud: PointCloud
    boxes: list[Box7]
    frame_id: str = "0"

    def __post_init__(self):
        ids = [b.instance_id for b in self.boxes if b.instance_id is not None]
        if len(ids) != len(set(ids)):
            raise DataError(f"frame {self.frame_id}: duplicate instance ids")


# ---------------------------------------------------------------------------
# binary point format: consecutive little-endian float32 (x, y, z, intensity)

POINT_RECORD_BYTES = 16


def read_point_bin(path) -> PointCloud:
    raw = Path(path).read_bytes()
    if len(raw) % POINT_RECORD_BYTES != 0:
        raise DataError(
            f"{path}: truncated point file, {len(raw)} bytes is not a multiple of {POINT_RECORD_BYTES}"
        )
    data = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    if data.size and not np.all(np.isfinite(data)):
        bad = int(np.flatnonzero(~np.isfinite(data).all(axis=1))[0])
        raise DataError(f"{path}: non-finite payload at record {bad} (byte offset {bad * 16})")
    if len(data) == 0:
        return PointCloud(np.empty((0, 3)))
    return PointCloud(data[:, :3].astype(float), intensity=data[:, 3].astype(float))


def write_point_bin(path, cloud: PointCloud) -> None:
    n = len(cloud)
    rec = np.zeros((n, 4), dtype="<f4")
    rec[:, :3] = cloud.coords
    if cloud.intensity is not None:
        rec[:, 3] = cloud.intensity
    Path(path).write_bytes(rec.tobytes())


# ---------------------------------------------------------------------------
# label text format: one box per line
#   class_name cx cy cz l w h yaw instance_id
# '#' starts a comment.


def read_scene_labels(path, catalog: Sequence[str] = CLASS_NAMES) -> list[Box7]:
    boxes: list[Box7] = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) != 9:
            raise DataError(f"{path}:{lineno}: expected 9 fields, got {len(parts)}")
        name = parts[0]
        if name not in catalog:
            raise DataError(f"{path}:{lineno}: unknown class {name!r}")
        try:
            vals = [float(v) for v in parts[1:8]]
            inst = int(parts[8])
        except ValueError as e:
            raise DataError(f"{path}:{lineno}: {e}")
        boxes.append(Box7(*vals, class_id=list(catalog).index(name), instance_id=inst))
    return boxes


def write_scene_labels(path, boxes: Sequence[Box7], catalog: Sequence[str] = CLASS_NAMES) -> None:
    lines = ["# class cx cy cz l w h yaw instance_id"]
    for i, b in enumerate(boxes):
        inst = b.instance_id if b.instance_id is not None else i
        lines.append(
            f"{catalog[b.class_id]} {b.cx:.6f} {b.cy:.6f} {b.cz:.6f} "
            f"{b.l:.6f} {b.w:.6f} {b.h:.6f} {b.yaw:.6f} {inst}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# synthetic scenes


@dataclass
class SceneGenSpec:
    """Desk-scale synthetic scene description; deterministic per seed."""

    extent: float = 40.0
    background_points: int = 15000
    instances_per_class: tuple[tuple[int, int], ...] = ((2, 4), (2, 4), (2, 4))
    mean_sizes: np.ndarray = field(default_factory=lambda: DEFAULT_MEAN_SIZES.copy())
    size_spread: float = 0.08
    points_per_instance: tuple[int, int] = (40, 120)
    noise: float = 0.05
    seed: int = 0

    def __post_init__(self):
        self.mean_sizes = np.asarray(self.mean_sizes, dtype=float)
        if self.background_points < 0 or self.extent <= 0:
            raise DataError("background point count and extent must be positive")
        if np.any(self.mean_sizes <= 0):
            raise DataError("class mean sizes must be positive")


def _points_in_box_frame(rng: np.random.Generator, box: Box7, count: int,
                         shell_fraction: float = 0.3) -> np.ndarray:
    """Box-frame samples: uniform volume plus a near-surface shell share."""
    half = box.size / 2.0
    pts = rng.uniform(-half, half, size=(count, 3))
    n_shell = int(round(shell_fraction * count))
    if n_shell:
        faces = rng.integers(0, 6, size=n_shell)
        depth = rng.uniform(0.0, 0.1) * box.size.min()
        for i, f in enumerate(faces):
            ax, sign = divmod(f, 2)
            pts[i, ax] = (half[ax] - rng.uniform(0.0, depth)) * (1 if sign == 0 else -1)
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    world = np.empty_like(pts)
    world[:, 0] = c * pts[:, 0] - s * pts[:, 1]
    world[:, 1] = s * pts[:, 0] + c * pts[:, 1]
    world[:, 2] = pts[:, 2]
    return world + box.center


def generate_scene(spec: SceneGenSpec, frame_id: str = "0") -> LabeledScene:
    rng = np.random.default_rng(spec.seed)
    half_ext = spec.extent / 2.0
    coords = []
    if spec.background_points:
        bg = np.empty((spec.background_points, 3))
        bg[:, 0] = rng.uniform(-half_ext, half_ext, spec.background_points)
        bg[:, 1] = rng.uniform(-half_ext, half_ext, spec.background_points)
        bg[:, 2] = rng.normal(0.0, spec.noise, spec.background_points)
        coords.append(bg)

    boxes: list[Box7] = []
    inst_id = 0
    for class_id, (lo, hi) in enumerate(spec.instances_per_class):
        count = int(rng.integers(lo, hi + 1))
        mean = spec.mean_sizes[class_id]
        for _ in range(count):
            placed = None
            for _attempt in range(100):
                size = np.clip(
                    rng.normal(mean, spec.size_spread * mean), 0.3 * mean, 2.0 * mean
                )
                yaw = rng.uniform(-math.pi, math.pi)
                margin = 0.5 * float(np.hypot(size[0], size[1]))
                cx = rng.uniform(-half_ext + margin, half_ext - margin)
                cy = rng.uniform(-half_ext + margin, half_ext - margin)
                cand = Box7(cx, cy, size[2] / 2.0, *size, yaw, class_id, inst_id)
                if all(geometry.bev_intersection_area(cand, b) == 0.0 for b in boxes):
                    placed = cand
                    break
            if placed is None:
                raise DataError(
                    f"could not place instance of class {class_id} after 100 retries"
                )
            boxes.append(placed)
            npts = int(rng.integers(*spec.points_per_instance, endpoint=True))
            coords.append(_points_in_box_frame(rng, placed, npts))
            inst_id += 1

    all_coords = np.concatenate(coords) if coords else np.empty((0, 3))
    intensity = rng.uniform(0.0, 1.0, len(all_coords))
    return LabeledScene(PointCloud(all_coords, intensity=intensity), boxes, frame_id)


# ---------------------------------------------------------------------------
# augmentation


@dataclass
class AugmentConfig:
    flip_probability: float = 0.5
    rotation_range: tuple[float, float] = (-math.pi / 4, math.pi / 4)
    scale_range: tuple[float, float] = (0.95, 1.05)
    paste_counts: tuple[int, ...] = (20, 15, 15)
    min_paste_points: int = 5

    def __post_init__(self):
        if self.rotation_range[0] > self.rotation_range[1]:
            raise DataError("rotation range must be ordered")
        if self.scale_range[0] > self.scale_range[1] or self.scale_range[0] <= 0:
            raise DataError("scale range must be ordered and positive")


@dataclass
class AugmentReport:
    flipped: bool = False
    rotation: float = 0.0
    scale: float = 1.0
    paste_attempted: int = 0
    paste_placed: int = 0
    paste_failed: int = 0


def _transform_box(b: Box7, flip: bool, theta: float, scale: float) -> Box7:
    cx, cy, cz, yaw = b.cx, b.cy, b.cz, b.yaw
    if flip:
        cy, yaw = -cy, -yaw
    c, s = math.cos(theta), math.sin(theta)
    cx, cy = c * cx - s * cy, s * cx + c * cy
    yaw += theta
    return Box7(cx * scale, cy * scale, cz * scale, b.l * scale, b.w * scale,
                b.h * scale, yaw, b.class_id, b.instance_id)


def _transform_points(pts: np.ndarray, flip: bool, theta: float, scale: float) -> np.ndarray:
    out = pts.copy()
    if flip:
        out[:, 1] = -out[:, 1]
    c, s = math.cos(theta), math.sin(theta)
    x, y = out[:, 0].copy(), out[:, 1].copy()
    out[:, 0] = c * x - s * y
    out[:, 1] = s * x + c * y
    return out * scale


def augment(
    scene: LabeledScene,
    config: AugmentConfig,
    bank: Sequence[tuple[Box7, np.ndarray]] = (),
    seed: int = 0,
) -> tuple[LabeledScene, AugmentReport]:
    """Scene-level flip/rotate/scale (in that order) followed by ground-truth
    paste of bank instances at collision-free poses (strict BEV non-overlap).

    Bank instances with fewer than ``min_paste_points`` points are rejected.
    Paste placement silently stops per instance when the retry budget runs
    out; the count lands in the report.
    """
    rng = np.random.default_rng(seed)
    report = AugmentReport()

    report.flipped = bool(rng.uniform() < config.flip_probability)
    report.rotation = float(rng.uniform(*config.rotation_range))
    report.scale = float(rng.uniform(*config.scale_range))

    coords = _transform_points(scene.cloud.coords, report.flipped, report.rotation, report.scale)
    boxes = [_transform_box(b, report.flipped, report.rotation, report.scale)
             for b in scene.boxes]
    intensity = None if scene.cloud.intensity is None else scene.cloud.intensity.copy()

    next_inst = max((b.instance_id for b in boxes if b.instance_id is not None), default=-1) + 1
    extra_coords = []
    extent = float(np.abs(coords[:, :2]).max()) if len(coords) else 10.0

    per_class: dict[int, list[tuple[Box7, np.ndarray]]] = {}
    for box, pts in bank:
        if len(pts) < config.min_paste_points:
            raise DataError(
                f"bank instance has {len(pts)} points, below minimum {config.min_paste_points}"
            )
        per_class.setdefault(box.class_id, []).append((box, pts))

    for class_id, want in enumerate(config.paste_counts):
        pool = per_class.get(class_id, [])
        if not pool:
            continue
        for _ in range(want):
            report.paste_attempted += 1
            src_box, src_pts = pool[int(rng.integers(len(pool)))]
            placed = None
            for _attempt in range(100):
                cx = rng.uniform(-extent, extent)
                cy = rng.uniform(-extent, extent)
                yaw = rng.uniform(-math.pi, math.pi)
                cand = Box7(cx, cy, src_box.h / 2.0, src_box.l, src_box.w, src_box.h,
                            yaw, class_id, next_inst)
                if all(geometry.bev_intersection_area(cand, b) == 0.0 for b in boxes):
                    placed = cand
                    break
            if placed is None:
                report.paste_failed += 1
                continue
            local = geometry.to_box_frame(src_pts, src_box)
            c, s = math.cos(placed.yaw), math.sin(placed.yaw)
            world = np.empty_like(local)
            world[:, 0] = c * local[:, 0] - s * local[:, 1]
            world[:, 1] = s * local[:, 0] + c * local[:, 1]
            world[:, 2] = local[:, 2]
            world += placed.center
            boxes.append(placed)
            extra_coords.append(world)
            next_inst += 1
            report.paste_placed += 1

    if extra_coords:
        added = np.concatenate(extra_coords)
        coords = np.concatenate([coords, added])
        if intensity is not None:
            pad = np.full(len(added), 0.5)
            intensity = np.concatenate([intensity, pad])

    return LabeledScene(PointCloud(coords, intensity=intensity), boxes, scene.frame_id), report


def extract_bank(scenes: Sequence[LabeledScene], min_points: int = 5) -> list[tuple[Box7, np.ndarray]]:
    """Collect (box, interior points) pairs usable for ground-truth paste."""
    bank = []
    for scene in scenes:
        for box in scene.boxes:
            mask = geometry.points_in_box(scene.cloud.coords, box)
            pts = scene.cloud.coords[mask]
            if len(pts) >= min_points:
                bank.append((box, pts))
    return bank


# ---------------------------------------------------------------------------
# scene directory layout: <frame>.bin + <frame>.txt per frame


def load_scene(dir_path, frame_id: str, catalog: Sequence[str] = CLASS_NAMES) -> LabeledScene:
    d = Path(dir_path)
    cloud = read_point_bin(d / f"{frame_id}.bin")
    boxes = read_scene_labels(d / f"{frame_id}.txt", catalog)
    return LabeledScene(cloud, boxes, frame_id)


def save_scene(dir_path, scene: LabeledScene, catalog: Sequence[str] = CLASS_NAMES) -> None:
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    write_point_bin(d / f"{scene.frame_id}.bin", scene.cloud)
    write_scene_labels(d / f"{scene.frame_id}.txt", scene.boxes, catalog)


def list_frames(dir_path) -> list[str]:
    d = Path(dir_path)
    return sorted(p.stem for p in d.glob("*.bin"))
