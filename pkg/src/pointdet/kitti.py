"""KITTI camera-frame label conversion to LiDAR-frame boxes.

Axis remapping: KITTI rectified-camera labels store (x right, y down,
z forward) at the box bottom center with dims (h, w, l) and rotation_y.
LiDAR frame is (x forward, y left, z up); the converter applies the inverse
rigid calibration (R0_rect, Tr_velo_to_cam), lifts the center by h/2, and
maps rotation_y to yaw = -rotation_y - pi/2.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .data_io import CLASS_NAMES
from .errors import DataError
from .geometry import Box7

REQUIRED_CALIB_KEYS = ("R0_rect", "Tr_velo_to_cam")


def read_calib(path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for line in Path(path).read_text().splitlines():
        if ":" not in line:
            continue
        key, rest = line.split(":", 1)
        vals = rest.split()
        if not vals:
            continue
        out[key.strip()] = np.array([float(v) for v in vals])
    for key in REQUIRED_CALIB_KEYS:
        if key not in out:
            raise DataError(f"{path}: missing calibration key {key!r}")
    return out


def _rect_to_lidar_transform(calib: dict[str, np.ndarray]) -> np.ndarray:
    r0 = np.eye(4)
    r0[:3, :3] = calib["R0_rect"].reshape(3, 3)
    tr = np.eye(4)
    tr[:3, :4] = calib["Tr_velo_to_cam"].reshape(3, 4)
    return np.linalg.inv(r0 @ tr)


def convert_label_file(
    label_path, calib_path, catalog: Sequence[str] = CLASS_NAMES
) -> list[Box7]:
    """Parse a KITTI label file and return LiDAR-frame boxes; classes not in
    the catalog (DontCare, Van, ...) are skipped."""
    calib = read_calib(calib_path)
    cam_to_lidar = _rect_to_lidar_transform(calib)
    boxes: list[Box7] = []
    inst = 0
    for lineno, line in enumerate(Path(label_path).read_text().splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) < 15:
            raise DataError(f"{label_path}:{lineno}: expected >= 15 fields, got {len(parts)}")
        name = parts[0]
        if name not in catalog:
            continue
        h, w, l = (float(v) for v in parts[8:11])
        x, y, z = (float(v) for v in parts[11:14])
        ry = float(parts[14])
        lidar = cam_to_lidar @ np.array([x, y, z, 1.0])
        cx, cy, cz = lidar[:3]
        cz += h / 2.0  # KITTI stores the bottom-center
        yaw = -ry - math.pi / 2.0
        boxes.append(Box7(cx, cy, cz, l, w, h, yaw,
                          class_id=list(catalog).index(name), instance_id=inst))
        inst += 1
    return boxes
