"""Downsampling strategies (random, D-FPS, Feat-FPS, top-k) and instance recall."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import geometry


@dataclass
class PointCloud:
    """N points: coords (N,3), optional intensity (N,), optional features (N,D)."""

    coords: np.ndarray
    intensity: Optional[np.ndarray] = None
    features: Optional[np.ndarray] = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.coords)):
            raise ValueError("point coordinates must be finite")
        if self.intensity is not None:
            self.intensity = np.asarray(self.intensity, dtype=float).reshape(-1)
            if len(self.intensity) != len(self.coords):
                raise ValueError("intensity length must match point count")
            if not np.all(np.isfinite(self.intensity)):
                raise ValueError("intensity must be finite")
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=float)
            if self.features.ndim != 2 or len(self.features) != len(self.coords):
                raise ValueError("features must be (N, D) matching point count")
            if not np.all(np.isfinite(self.features)):
                raise ValueError("features must be finite")

    def __len__(self) -> int:
        return len(self.coords)

    def subset(self, indices: np.ndarray) -> "PointCloud":
        return PointCloud(
            self.coords[indices],
            None if self.intensity is None else self.intensity[indices],
            None if self.features is None else self.features[indices],
        )


@dataclass
class SamplingOutcome:
    """Selected original-cloud indices plus provenance."""

    indices: np.ndarray
    strategy: str
    layer: int = 0

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        if len(np.unique(self.indices)) != len(self.indices):
            raise ValueError("sampled indices must be unique")


@dataclass
class RecallReport:
    """Per-class instance recall plus raw counts."""

    per_class: dict[int, float]
    recalled: dict[int, int]
    totals: dict[int, int]
    layer: int = 0


def sample_random(cloud: PointCloud, k: int, seed: int) -> SamplingOutcome:
    """k distinct indices, uniform without replacement via np.random.default_rng."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n = len(cloud)
    if n <= k:
        return SamplingOutcome(np.arange(n), "random")
    rng = np.random.default_rng(seed)
    return SamplingOutcome(rng.choice(n, size=k, replace=False), "random")


def sample_dfps(cloud: PointCloud, k: int, start: int = 0) -> SamplingOutcome:
    """Greedy farthest-point sampling in 3D Euclidean distance.

    O(N*k) via an incrementally maintained nearest-selected distance array;
    distance ties pick the lowest index (np.argmax convention).
    """
    n = len(cloud)
    if k > n:
        raise ValueError(f"k={k} exceeds point count {n}")
    coords = cloud.coords
    selected = np.empty(k, dtype=np.int64)
    selected[0] = start
    dist = np.sum((coords - coords[start]) ** 2, axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(dist))
        selected[i] = nxt
        np.minimum(dist, np.sum((coords - coords[nxt]) ** 2, axis=1), out=dist)
    return SamplingOutcome(selected, "d-fps")


def sample_featfps(
    cloud: PointCloud, k: int, start: int = 0, lam: float = 0.0
) -> SamplingOutcome:
    """FPS under d = d_feature + lam * d_euclidean (both squared L2).

    lam=0 is pure feature-space FPS; same tie-break as D-FPS.
    """
    if cloud.features is None:
        raise ValueError("feat-fps requires per-point features")
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    n = len(cloud)
    if k > n:
        raise ValueError(f"k={k} exceeds point count {n}")
    feats = cloud.features
    coords = cloud.coords
    selected = np.empty(k, dtype=np.int64)
    selected[0] = start

    def dist_to(idx: int) -> np.ndarray:
        d = np.sum((feats - feats[idx]) ** 2, axis=1)
        if lam > 0:
            d = d + lam * np.sum((coords - coords[idx]) ** 2, axis=1)
        return d

    dist = dist_to(start)
    for i in range(1, k):
        nxt = int(np.argmax(dist))
        selected[i] = nxt
        np.minimum(dist, dist_to(nxt), out=dist)
    return SamplingOutcome(selected, "feat-fps")


def sample_topk(scores: np.ndarray, k: int) -> SamplingOutcome:
    """Indices of the k largest scores, ties to the lowest index, sorted by
    descending score. O(N log k) selection via argpartition."""
    scores = np.asarray(scores, dtype=float).reshape(-1)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    n = len(scores)
    if k > n:
        raise ValueError(f"k={k} exceeds score count {n}")
    if k == n:
        cand = np.arange(n)
    else:
        # kth-largest cutoff, then resolve ties at the cutoff by lowest index.
        part = np.argpartition(-scores, k - 1)[:k]
        cutoff = scores[part].min()
        above = np.flatnonzero(scores > cutoff)
        at = np.flatnonzero(scores == cutoff)
        cand = np.concatenate([above, at[: k - len(above)]])
    order = np.lexsort((cand, -scores[cand]))
    return SamplingOutcome(cand[order], "top-k")


def instance_recall(scene, outcome: SamplingOutcome, min_points: int = 1) -> RecallReport:
    """An instance is recalled when >= min_points surviving points lie inside
    its box; per-class recall = recalled / total instances of that class."""
    surviving = scene.cloud.coords[outcome.indices]
    recalled: dict[int, int] = {}
    totals: dict[int, int] = {}
    for box in scene.boxes:
        totals[box.class_id] = totals.get(box.class_id, 0) + 1
        recalled.setdefault(box.class_id, 0)
        if len(surviving) and geometry.points_in_box(surviving, box).sum() >= min_points:
            recalled[box.class_id] += 1
    per_class = {c: recalled[c] / totals[c] for c in totals}
    return RecallReport(per_class, recalled, totals, layer=outcome.layer)


#: strategy tag -> needs scorer
TOPK_STRATEGIES = ("cls-aware", "ctr-aware", "top-k")


def run_schedule(
    cloud: PointCloud,
    schedule: Sequence[tuple[str, int]],
    scorer: Optional[Callable[[PointCloud, np.ndarray, int], np.ndarray]] = None,
    seed: int = 0,
    start: int = 0,
    lam: float = 0.0,
) -> list[SamplingOutcome]:
    """Apply layered downsampling; indices always refer to the original cloud.

    `scorer(subcloud, original_indices, layer)` supplies per-point scores for
    top-k layers. k values must be strictly decreasing.
    """
    ks = [k for _, k in schedule]
    if any(b >= a for a, b in zip(ks, ks[1:])):
        raise ValueError(f"schedule sizes must be strictly decreasing, got {ks}")
    if scorer is None and any(s in TOPK_STRATEGIES for s, _ in schedule):
        raise ValueError("top-k layers require a scorer")

    outcomes: list[SamplingOutcome] = []
    current = np.arange(len(cloud))
    sub = cloud
    for layer, (strategy, k) in enumerate(schedule):
        if strategy == "random":
            out = sample_random(sub, k, seed=seed + layer)
        elif strategy == "d-fps":
            out = sample_dfps(sub, min(k, len(sub)), start=start if layer == 0 else 0)
        elif strategy == "feat-fps":
            out = sample_featfps(sub, min(k, len(sub)), start=start if layer == 0 else 0, lam=lam)
        elif strategy in TOPK_STRATEGIES:
            scores = scorer(sub, current, layer)
            out = sample_topk(scores, min(k, len(sub)))
            out.strategy = strategy
        else:
            raise ValueError(f"unknown sampling strategy {strategy!r}")
        current = current[out.indices]
        sub = sub.subset(out.indices)
        outcomes.append(SamplingOutcome(current, out.strategy, layer=layer))
    return outcomes


#: Default encoder schedule (point budgets and strategies per layer).
DEFAULT_SCHEDULE = [
    ("d-fps", 4096),
    ("d-fps", 1024),
    ("ctr-aware", 512),
    ("ctr-aware", 256),
]
