"""Detection evaluation: greedy IoU matching, interpolated average precision."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import geometry
from .errors import DataError
from .geometry import Box7

#: KITTI-style per-class IoU thresholds (car, pedestrian, cyclist).
DEFAULT_IOU_THRESHOLDS = (0.7, 0.5, 0.5)


@dataclass
class ClassEval:
    ap: float
    recall: float
    precision: float
    matched: int
    total_gt: int
    total_det: int


def _interpolated_ap(recalls: np.ndarray, precisions: np.ndarray, positions: int) -> float:
    """AP as the mean of max-precision-at-recall>=r over evenly spaced recall
    positions (40-point: r = 1/40 .. 1; 11-point: r = 0, 0.1 .. 1)."""
    if positions == 40:
        sample_points = np.arange(1, 41) / 40.0
    elif positions == 11:
        sample_points = np.arange(0, 11) / 10.0
    else:
        raise DataError(f"unsupported interpolation positions {positions}")
    ap = 0.0
    for r in sample_points:
        mask = recalls >= r - 1e-12
        ap += precisions[mask].max() if mask.any() else 0.0
    return ap / len(sample_points)


def evaluate_class(
    detections: Mapping[str, Sequence[tuple[Box7, float]]],
    ground_truth: Mapping[str, Sequence[Box7]],
    class_id: int,
    iou_threshold: float,
    positions: int = 40,
) -> ClassEval:
    gts = {f: [b for b in boxes if b.class_id == class_id] for f, boxes in ground_truth.items()}
    total_gt = sum(len(v) for v in gts.values())
    dets = []
    for frame, pairs in detections.items():
        if frame not in ground_truth:
            raise DataError(f"detections reference unknown frame {frame!r}")
        for box, score in pairs:
            if box.class_id == class_id:
                dets.append((score, frame, box))
    dets.sort(key=lambda t: -t[0])
    matched = {f: np.zeros(len(g), dtype=bool) for f, g in gts.items()}
    tp = np.zeros(len(dets))
    fp = np.zeros(len(dets))
    for i, (_score, frame, box) in enumerate(dets):
        candidates = gts.get(frame, [])
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(candidates):
            if matched[frame][j]:
                continue
            iou = geometry.iou_3d(box, gt)
            if iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0 and best_iou >= iou_threshold:
            matched[frame][best_j] = True
            tp[i] = 1
        else:
            fp[i] = 1
    if total_gt == 0:
        return ClassEval(0.0, 0.0, 0.0, 0, 0, len(dets))
    if len(dets) == 0:
        return ClassEval(0.0, 0.0, 0.0, 0, total_gt, 0)
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(fp)
    recalls = cum_tp / total_gt
    precisions = cum_tp / (cum_tp + cum_fp)
    ap = _interpolated_ap(recalls, precisions, positions)
    n_matched = int(cum_tp[-1])
    return ClassEval(ap, n_matched / total_gt, float(precisions[-1]), n_matched,
                     total_gt, len(dets))


def evaluate_detections(
    detections: Mapping[str, Sequence[tuple[Box7, float]]],
    ground_truth: Mapping[str, Sequence[Box7]],
    iou_thresholds: Sequence[float] = DEFAULT_IOU_THRESHOLDS,
    num_classes: int | None = None,
    positions: int = 40,
) -> dict[int, ClassEval]:
    if num_classes is None:
        num_classes = len(iou_thresholds)
    return {
        c: evaluate_class(detections, ground_truth, c, iou_thresholds[c], positions)
        for c in range(num_classes)
    }
