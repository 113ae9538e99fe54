"""Radius neighbor queries on a uniform grid, grouping, canonicalization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .sampling import PointCloud


@dataclass
class GroupIndex:
    """Per-center neighbor lists padded to nquery entries.

    `valid` flags real neighbors; padding repeats the nearest neighbor.
    Centers with no neighbor in radius fall back to the nearest cloud point
    and are flagged in `empty`.
    """

    indices: np.ndarray  # (M, nquery) int
    valid: np.ndarray    # (M, nquery) bool
    empty: np.ndarray    # (M,) bool


class SpatialIndex:
    """Uniform grid with cell size = query radius; cell -> point index buckets."""

    def __init__(self, coords: np.ndarray, cell: float):
        if not cell > 0:
            raise ValueError(f"cell size must be positive, got {cell}")
        self.coords = coords
        self.cell = cell
        self.origin = coords.min(axis=0) if len(coords) else np.zeros(3)
        keys = np.floor((coords - self.origin) / cell).astype(np.int64)
        self.buckets: dict[tuple[int, int, int], np.ndarray] = {}
        order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
        sorted_keys = keys[order]
        if len(order):
            splits = np.flatnonzero(np.any(np.diff(sorted_keys, axis=0) != 0, axis=1)) + 1
            for chunk in np.split(order, splits):
                self.buckets[tuple(int(v) for v in keys[chunk[0]])] = chunk

    def candidates(self, center: np.ndarray) -> np.ndarray:
        """Indices from the 27 cells around the center's cell."""
        base = np.floor((center - self.origin) / self.cell).astype(np.int64)
        found = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    bucket = self.buckets.get((base[0] + dx, base[1] + dy, base[2] + dz))
                    if bucket is not None:
                        found.append(bucket)
        if not found:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(found)


def ball_query(
    cloud: PointCloud,
    centers: np.ndarray,
    radius: float,
    nquery: int,
    index: Optional[SpatialIndex] = None,
) -> GroupIndex:
    """Up to nquery neighbors within radius per center, ascending distance,
    distance ties to the lower index; padded by repeating the nearest."""
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    if nquery < 1:
        raise ValueError(f"nquery must be >= 1, got {nquery}")
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    coords = cloud.coords
    m = len(centers)
    # Small problems: one dense distance matrix beats grid bucket walks.
    if index is None and m * max(len(coords), 1) <= 4_000_000:
        return _ball_query_dense(coords, centers, radius, nquery)
    if index is None:
        index = SpatialIndex(coords, radius)
    out_idx = np.zeros((m, nquery), dtype=np.int64)
    out_valid = np.zeros((m, nquery), dtype=bool)
    out_empty = np.zeros(m, dtype=bool)
    r2 = radius * radius
    for ci, center in enumerate(centers):
        cand = index.candidates(center)
        if len(cand):
            d2 = np.sum((coords[cand] - center) ** 2, axis=1)
            hit = d2 <= r2
            cand, d2 = cand[hit], d2[hit]
        if len(cand) == 0:
            # No neighbor in radius: fall back to the nearest cloud point.
            d_all = np.sum((coords - center) ** 2, axis=1)
            nearest = int(np.argmin(d_all))
            out_idx[ci, :] = nearest
            out_empty[ci] = True
            continue
        order = np.lexsort((cand, d2))
        chosen = cand[order[:nquery]]
        out_idx[ci, : len(chosen)] = chosen
        out_valid[ci, : len(chosen)] = True
        if len(chosen) < nquery:
            out_idx[ci, len(chosen):] = chosen[0]
    return GroupIndex(out_idx, out_valid, out_empty)


def _ball_query_dense(coords: np.ndarray, centers: np.ndarray, radius: float,
                      nquery: int) -> GroupIndex:
    """Vectorized ball query over a full (M, N) distance matrix; identical
    semantics to the grid path (ascending distance, ties by index)."""
    m, n = len(centers), len(coords)
    d2 = np.sum((centers[:, None, :] - coords[None, :, :]) ** 2, axis=2)
    counts = np.minimum((d2 <= radius * radius).sum(axis=1), nquery)

    if n <= nquery:
        part = np.broadcast_to(np.arange(n), (m, n))
    else:
        part = np.argpartition(d2, nquery - 1, axis=1)[:, :nquery]
    pd2 = np.take_along_axis(d2, part, axis=1)
    # Sort each partition by (distance, index): two stable argsorts = lexsort.
    o1 = np.argsort(part, axis=1, kind="stable")
    pd2 = np.take_along_axis(pd2, o1, axis=1)
    part = np.take_along_axis(part, o1, axis=1)
    o2 = np.argsort(pd2, axis=1, kind="stable")
    pd2 = np.take_along_axis(pd2, o2, axis=1)
    take = np.take_along_axis(part, o2, axis=1)

    if n > nquery:
        # Distance ties across the partition cut: redo those rows exactly.
        kth = pd2[:, -1]
        ambiguous = np.flatnonzero((d2 <= kth[:, None]).sum(axis=1) > nquery)
        for ri in ambiguous:
            order = np.lexsort((np.arange(n), d2[ri]))[:nquery]
            take[ri] = order

    if take.shape[1] < nquery:
        pad = np.repeat(take[:, :1], nquery - take.shape[1], axis=1)
        take = np.concatenate([take, pad], axis=1)
    cols = np.arange(nquery)[None, :]
    valid = cols < counts[:, None]
    empty = counts == 0
    out_idx = np.where(valid, take, take[:, :1])
    # Empty groups fall back to the nearest point overall (already column 0).
    return GroupIndex(out_idx.astype(np.int64), valid, empty)


def group_and_canonicalize(
    cloud: PointCloud, centers: np.ndarray, groups: GroupIndex
) -> np.ndarray:
    """Grouped block (M, nquery, 3 + D): neighbor - center coordinates, then
    point features when present."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    rel = cloud.coords[groups.indices] - centers[:, None, :]
    if cloud.features is None:
        return rel
    return np.concatenate([rel, cloud.features[groups.indices]], axis=-1)


def multi_scale_group(
    cloud: PointCloud,
    centers: np.ndarray,
    radii: Sequence[float],
    nquery: Sequence[int],
) -> list[np.ndarray]:
    """One grouped block per (radius, nquery) pair; radii strictly increasing."""
    if len(radii) != len(nquery):
        raise ValueError("radii and nquery must have equal length")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError(f"radii must be strictly increasing, got {list(radii)}")
    blocks = []
    for r, nq in zip(radii, nquery):
        groups = ball_query(cloud, centers, r, nq)
        blocks.append(group_and_canonicalize(cloud, centers, groups))
    return blocks
