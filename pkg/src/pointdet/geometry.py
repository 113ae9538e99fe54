"""Oriented 3D box math: membership, soft center masks, rotated IoU, NMS."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

# Degenerate BEV intersections (touching edges/corners) count as empty.
_AREA_EPS = 1e-12
# Slack for boundary membership so points constructed exactly on a face
# survive the rotation round-off.
_CONTAIN_EPS = 1e-9


def normalize_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a > math.pi:
        a -= 2.0 * math.pi
    elif a <= -math.pi:
        a += 2.0 * math.pi
    return a


@dataclass(frozen=True)
class Box7:
    """7-DOF oriented box: center, length/width/height, yaw about z."""

    cx: float
    cy: float
    cz: float
    l: float
    w: float
    h: float
    yaw: float
    class_id: int = 0
    instance_id: int | None = None

    def __post_init__(self):
        for name in ("l", "w", "h"):
            if not getattr(self, name) > 0:
                raise ValueError(f"box {name} must be positive, got {getattr(self, name)}")
        for name in ("cx", "cy", "cz", "l", "w", "h", "yaw"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"box {name} must be finite")
        object.__setattr__(self, "yaw", normalize_angle(self.yaw))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.cz])

    @property
    def size(self) -> np.ndarray:
        return np.array([self.l, self.w, self.h])


@dataclass(frozen=True)
class ScoredBox:
    box: Box7
    score: float

    def __post_init__(self):
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValueError(f"score must be finite in [0,1], got {self.score}")


def to_box_frame(p: np.ndarray, b: Box7) -> np.ndarray:
    """Translate by -center then rotate by -yaw; box axes are x=l, y=w, z=h.

    Accepts a single point (3,) or a stack (N, 3).
    """
    p = np.asarray(p, dtype=float)
    d = p - b.center
    c, s = math.cos(b.yaw), math.sin(b.yaw)
    out = np.empty_like(d)
    out[..., 0] = c * d[..., 0] + s * d[..., 1]
    out[..., 1] = -s * d[..., 0] + c * d[..., 1]
    out[..., 2] = d[..., 2]
    return out


def contains(b: Box7, p: np.ndarray) -> bool:
    """Point-in-box test; boundary points count as inside."""
    q = np.abs(to_box_frame(p, b))
    half = b.size / 2.0
    return bool(np.all(q <= half + _CONTAIN_EPS))


def points_in_box(coords: np.ndarray, b: Box7) -> np.ndarray:
    """Vectorized containment mask for an (N, 3) array."""
    q = np.abs(to_box_frame(coords, b))
    half = b.size / 2.0
    return np.all(q <= half + _CONTAIN_EPS, axis=-1)


def surface_distances(b: Box7, p: np.ndarray) -> np.ndarray:
    """Distances to the six faces (front, back, left, right, up, down).

    Negative entries mean the point is outside on that side.
    """
    q = to_box_frame(p, b)
    half = b.size / 2.0
    return np.array(
        [
            half[0] - q[0],  # front
            half[0] + q[0],  # back
            half[1] - q[1],  # left
            half[1] + q[1],  # right
            half[2] - q[2],  # up
            half[2] + q[2],  # down
        ]
    )


def soft_point_mask(b: Box7, p: np.ndarray) -> float:
    """Centrality score in [0,1]: cube root of the product of opposing
    face-distance ratios. 1 at the center, 0 on any face, 0 outside."""
    d = surface_distances(b, p)
    if np.any(d < 0):
        return 0.0
    prod = 1.0
    for i in (0, 2, 4):
        lo, hi = min(d[i], d[i + 1]), max(d[i], d[i + 1])
        if hi <= 0.0:
            return 0.0
        prod *= lo / hi
    return float(np.cbrt(prod))


def soft_point_masks(coords: np.ndarray, b: Box7) -> np.ndarray:
    """Vectorized soft mask for an (N, 3) coordinate array."""
    q = to_box_frame(coords, b)
    half = b.size / 2.0
    prod = np.ones(len(q))
    inside = np.ones(len(q), dtype=bool)
    for ax in range(3):
        lo_d = half[ax] - q[:, ax]
        hi_d = half[ax] + q[:, ax]
        inside &= (lo_d >= 0) & (hi_d >= 0)
        near = np.minimum(lo_d, hi_d)
        far = np.maximum(lo_d, hi_d)
        with np.errstate(divide="ignore", invalid="ignore"):
            prod *= np.where(far > 0, near / far, 0.0)
    out = np.where(inside, np.cbrt(np.clip(prod, 0.0, None)), 0.0)
    return out


def expand(b: Box7, mode: str, amount: float) -> Box7:
    """Grow a box: 'factor' scales (l, w, h), 'length' adds meters to each."""
    if not amount > 0:
        raise ValueError(f"expand amount must be positive, got {amount}")
    if mode == "factor":
        l, w, h = b.l * amount, b.w * amount, b.h * amount
    elif mode == "length":
        l, w, h = b.l + amount, b.w + amount, b.h + amount
    else:
        raise ValueError(f"unknown expand mode {mode!r}")
    return Box7(b.cx, b.cy, b.cz, l, w, h, b.yaw, b.class_id, b.instance_id)


# Box-frame corner sign pattern, lexicographic over (-, +) per axis.
_CORNER_SIGNS = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))


def corners(b: Box7) -> np.ndarray:
    """World-frame corners (8, 3) in fixed lexicographic sign order."""
    local = _CORNER_SIGNS * (b.size / 2.0)
    c, s = math.cos(b.yaw), math.sin(b.yaw)
    out = np.empty_like(local)
    out[:, 0] = c * local[:, 0] - s * local[:, 1]
    out[:, 1] = s * local[:, 0] + c * local[:, 1]
    out[:, 2] = local[:, 2]
    return out + b.center


def box_from_corners(pts: np.ndarray, class_id: int = 0, instance_id: int | None = None) -> Box7:
    """Refit a Box7 from 8 corners in the order produced by `corners`."""
    pts = np.asarray(pts, dtype=float)
    center = pts.mean(axis=0)
    # Axis vectors from the corner correspondence: index 4 flips the x sign
    # of index 0, index 2 flips y, index 1 flips z.
    x_axis = pts[4] - pts[0]
    y_axis = pts[2] - pts[0]
    z_axis = pts[1] - pts[0]
    l = float(np.linalg.norm(x_axis))
    w = float(np.linalg.norm(y_axis))
    h = float(np.linalg.norm(z_axis))
    yaw = math.atan2(x_axis[1], x_axis[0])
    return Box7(*center, l, w, h, yaw, class_id, instance_id)


def bev_corners(b: Box7) -> np.ndarray:
    """Counter-clockwise BEV footprint (4, 2)."""
    half_l, half_w = b.l / 2.0, b.w / 2.0
    local = np.array(
        [[half_l, half_w], [-half_l, half_w], [-half_l, -half_w], [half_l, -half_w]]
    )
    c, s = math.cos(b.yaw), math.sin(b.yaw)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([b.cx, b.cy])


def _clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex subject by a convex CCW clip polygon."""
    output = subject
    n = len(clip)
    for i in range(n):
        if len(output) == 0:
            break
        a = clip[i]
        b = clip[(i + 1) % n]
        edge = b - a
        inp = output
        output = []
        # Signed distance to the edge line; >= 0 is inside for CCW polygons.
        prev = inp[-1]
        prev_side = edge[0] * (prev[1] - a[1]) - edge[1] * (prev[0] - a[0])
        for cur in inp:
            cur_side = edge[0] * (cur[1] - a[1]) - edge[1] * (cur[0] - a[0])
            if cur_side >= 0:
                if prev_side < 0:
                    t = prev_side / (prev_side - cur_side)
                    output.append(prev + t * (cur - prev))
                output.append(cur)
            elif prev_side >= 0:
                t = prev_side / (prev_side - cur_side)
                output.append(prev + t * (cur - prev))
            prev, prev_side = cur, cur_side
        output = np.asarray(output)
    return np.asarray(output)


def _polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def bev_intersection_area(a: Box7, b: Box7) -> float:
    """Rotated-rectangle overlap area via convex polygon clipping."""
    inter = _clip_polygon(bev_corners(a), bev_corners(b))
    area = _polygon_area(inter)
    return area if area > _AREA_EPS else 0.0


def _circumradius_bev(b: Box7) -> float:
    return 0.5 * math.hypot(b.l, b.w)


def iou_3d(a: Box7, b: Box7) -> float:
    """Volume IoU: rotated BEV intersection times z-extent overlap."""
    # Quick reject: BEV footprints cannot meet beyond the circumradius sum.
    if math.hypot(a.cx - b.cx, a.cy - b.cy) > _circumradius_bev(a) + _circumradius_bev(b):
        return 0.0
    dz = min(a.cz + a.h / 2, b.cz + b.h / 2) - max(a.cz - a.h / 2, b.cz - b.h / 2)
    if dz <= 0:
        return 0.0
    inter_area = bev_intersection_area(a, b)
    if inter_area == 0.0:
        return 0.0
    inter = inter_area * dz
    vol_a = a.l * a.w * a.h
    vol_b = b.l * b.w * b.h
    return inter / (vol_a + vol_b - inter)


def nms_3d(boxes: list[ScoredBox], iou_threshold: float) -> list[ScoredBox]:
    """Greedy descending-score suppression; score ties keep the lower index."""
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in [0,1], got {iou_threshold}")
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
    kept: list[int] = []
    suppressed = [False] * len(boxes)
    for i in order:
        if suppressed[i]:
            continue
        kept.append(i)
        for j in order:
            if not suppressed[j] and j != i and iou_3d(boxes[i].box, boxes[j].box) > iou_threshold:
                suppressed[j] = True
    return [boxes[i] for i in kept]
