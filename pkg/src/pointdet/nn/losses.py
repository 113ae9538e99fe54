"""Detector losses: sampling cross-entropies, centroid votes, box regression."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import geometry
from ..geometry import Box7
from .autodiff import Tensor, concat, log_softmax

NUM_ANGLE_BINS = 12
BIN_WIDTH = 2.0 * math.pi / NUM_ANGLE_BINS
#: box regression head width: 3 loc + 3 size + 12 bin logits + 12 bin residuals
BOX_HEAD_WIDTH = 30


@dataclass
class LossBreakdown:
    """Per-term scalars of the multi-task loss; total is their plain sum."""

    sample: float = 0.0
    cent: float = 0.0
    cls: float = 0.0
    loc: float = 0.0
    size: float = 0.0
    angle_bin: float = 0.0
    angle_res: float = 0.0
    corner: float = 0.0

    @property
    def box(self) -> float:
        return self.loc + self.size + self.angle_bin + self.angle_res + self.corner

    @property
    def total(self) -> float:
        return self.sample + self.cent + self.cls + self.box

    def as_dict(self) -> dict[str, float]:
        return {
            "sample": self.sample,
            "cent": self.cent,
            "cls": self.cls,
            "loc": self.loc,
            "size": self.size,
            "angle_bin": self.angle_bin,
            "angle_res": self.angle_res,
            "corner": self.corner,
            "box": self.box,
            "total": self.total,
        }


def loss_cls_aware(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Per-class sigmoid cross-entropy, summed over classes, mean over points.

    Labels are one-hot rows, or all-zero for background points.
    """
    labels = np.asarray(labels, dtype=float)
    if logits.shape != labels.shape:
        raise ValueError(f"logits {logits.shape} vs labels {labels.shape}")
    p = logits.sigmoid()
    term = Tensor(labels) * p.log() + Tensor(1.0 - labels) * (1.0 - p).log()
    return -(term.sum(axis=1).mean())


def loss_ctr_aware(logits: Tensor, labels: np.ndarray, masks: np.ndarray) -> Tensor:
    """Sigmoid cross-entropy with the foreground term weighted by the soft
    center mask; background term unweighted. All-ones masks reduce to
    loss_cls_aware."""
    labels = np.asarray(labels, dtype=float)
    masks = np.asarray(masks, dtype=float).reshape(-1, 1)
    if logits.shape != labels.shape:
        raise ValueError(f"logits {logits.shape} vs labels {labels.shape}")
    if np.any(masks < 0) or np.any(masks > 1):
        raise ValueError("masks must lie in [0, 1]")
    p = logits.sigmoid()
    term = Tensor(masks * labels) * p.log() + Tensor(1.0 - labels) * (1.0 - p).log()
    return -(term.sum(axis=1).mean())


def loss_centroid(
    pred_offsets: Tensor,
    positions: np.ndarray,
    instance_ids: np.ndarray,
    gt_centers: dict[int, np.ndarray],
) -> tuple[Tensor, list[int]]:
    """Centroid vote loss: per marked point, L1 offset error plus L1 spread of
    its shifted position around the per-instance vote mean; averaged per
    instance, then over instances.

    `instance_ids` holds -1 for unmarked points. Returns the loss and the ids
    of instances that had no marked point (skipped).
    """
    positions = np.asarray(positions, dtype=float)
    instance_ids = np.asarray(instance_ids)
    shifted = Tensor(positions) + pred_offsets
    terms = []
    skipped = []
    for inst, center in gt_centers.items():
        members = np.flatnonzero(instance_ids == inst)
        if len(members) == 0:
            skipped.append(inst)
            continue
        center = np.asarray(center, dtype=float)
        gt_off = center - positions[members]
        off_err = (pred_offsets[members] - Tensor(gt_off)).abs().sum(axis=1)
        votes = shifted[members]
        vote_mean = votes.mean(axis=0, keepdims=True)
        spread = (votes - vote_mean).abs().sum(axis=1)
        terms.append((off_err + spread).mean())
    if not terms:
        return Tensor(0.0), skipped
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total / len(terms), skipped


def angle_bin_encode(yaw: float) -> tuple[int, float]:
    """Yaw -> (bin, normalized in-bin residual).

    Bin centers sit at b * BIN_WIDTH for b in 0..11; the residual is
    normalized by the half bin width into [-1, 1]. Values exactly halfway
    between two centers go to the lower bin.
    """
    y = yaw % (2.0 * math.pi)
    b = math.ceil(y / BIN_WIDTH - 0.5)  # round half down
    res = y - b * BIN_WIDTH
    b = b % NUM_ANGLE_BINS
    return b, res / (BIN_WIDTH / 2.0)


def angle_bin_decode(b: int, res_normalized: float) -> float:
    return b * BIN_WIDTH + res_normalized * (BIN_WIDTH / 2.0)


def encode_box_target(
    target: Box7, centroid: np.ndarray, mean_size: np.ndarray
) -> dict:
    """Regression targets for the 30-wide box head relative to a centroid."""
    centroid = np.asarray(centroid, dtype=float)
    mean_size = np.asarray(mean_size, dtype=float)
    b, res = angle_bin_encode(target.yaw)
    return {
        "loc": target.center - centroid,
        "size": (target.size - mean_size) / mean_size,
        "bin": b,
        "res": res,
    }


def decode_box(
    pred: np.ndarray,
    centroid: np.ndarray,
    mean_size: np.ndarray,
    class_id: int = 0,
) -> Box7:
    """Invert the box-head encoding: center = centroid + residual, size =
    mean * (1 + residual), yaw = bin center + residual * half bin width."""
    pred = np.asarray(pred, dtype=float).reshape(-1)
    if len(pred) != BOX_HEAD_WIDTH:
        raise ValueError(f"box head output must have width {BOX_HEAD_WIDTH}")
    centroid = np.asarray(centroid, dtype=float)
    mean_size = np.asarray(mean_size, dtype=float)
    center = centroid + pred[0:3]
    # Floor the decoded size: raw residuals below -1 would invert the box.
    size = np.maximum(mean_size * (1.0 + pred[3:6]), 0.05)
    b = int(np.argmax(pred[6:18]))
    yaw = angle_bin_decode(b, float(pred[18 + b]))
    return Box7(*center, *size, yaw, class_id=class_id)


_CORNER_SIGNS = geometry._CORNER_SIGNS


def loss_box_batch(
    pred: Tensor,
    targets: list[Box7],
    centroids: np.ndarray,
    mean_sizes: np.ndarray,
) -> dict[str, Tensor]:
    """Batched box loss over P positives; each term is the mean over them.

    Terms: smooth-L1 location/size residuals, angle-bin cross-entropy over 12
    bins, in-bin smooth-L1 residual supervised at the true bin, and a corner
    L1 taking the per-box minimum over the target's pi-flipped twin.
    """
    p = len(targets)
    if pred.shape != (p, BOX_HEAD_WIDTH):
        raise ValueError(f"expected ({p}, {BOX_HEAD_WIDTH}) box head output, got {pred.shape}")
    centroids = np.asarray(centroids, dtype=float).reshape(p, 3)
    mean_sizes = np.asarray(mean_sizes, dtype=float).reshape(p, 3)

    loc_t = np.empty((p, 3))
    size_t = np.empty((p, 3))
    bins = np.empty(p, dtype=np.int64)
    res_t = np.empty(p)
    for i, target in enumerate(targets):
        enc = encode_box_target(target, centroids[i], mean_sizes[i])
        loc_t[i], size_t[i], bins[i], res_t[i] = enc["loc"], enc["size"], enc["bin"], enc["res"]

    rows = np.arange(p)
    loc = (pred[:, 0:3] - Tensor(loc_t)).smooth_l1().mean()
    size = (pred[:, 3:6] - Tensor(size_t)).smooth_l1().mean()
    logp = log_softmax(pred[:, 6:18], axis=1)
    angle_bin = -(logp[rows, bins].mean())
    angle_res = (pred[rows, 18 + bins] - Tensor(res_t)).smooth_l1().mean()

    # Decoded corners follow the predicted bin (argmax is locally constant).
    pred_bins = np.argmax(pred.data[:, 6:18], axis=1)
    dec_center = Tensor(centroids) + pred[:, 0:3]
    dec_size = Tensor(mean_sizes) * (Tensor(np.ones((p, 3))) + pred[:, 3:6])
    dec_yaw = pred[rows, 18 + pred_bins] * (BIN_WIDTH / 2.0) + Tensor(pred_bins * BIN_WIDTH)
    local = Tensor(_CORNER_SIGNS[None, :, :] * 0.5) * dec_size.reshape(p, 1, 3)
    c = dec_yaw.cos().reshape(p, 1)
    s = dec_yaw.sin().reshape(p, 1)
    x = local[:, :, 0] * c - local[:, :, 1] * s
    y = local[:, :, 0] * s + local[:, :, 1] * c
    z = local[:, :, 2]
    dec_corners = concat(
        [x.reshape(p, 8, 1), y.reshape(p, 8, 1), z.reshape(p, 8, 1)], axis=2
    ) + dec_center.reshape(p, 1, 3)

    tgt = np.stack([geometry.corners(t) for t in targets])
    tgt_flip = np.stack(
        [
            geometry.corners(
                Box7(t.cx, t.cy, t.cz, t.l, t.w, t.h, t.yaw + math.pi,
                     t.class_id, t.instance_id)
            )
            for t in targets
        ]
    )
    m_plain = (dec_corners - Tensor(tgt)).abs().sum(axis=2).mean(axis=1)
    m_flip = (dec_corners - Tensor(tgt_flip)).abs().sum(axis=2).mean(axis=1)
    pick_plain = (m_plain.data <= m_flip.data).astype(float)
    corner = (Tensor(pick_plain) * m_plain + Tensor(1.0 - pick_plain) * m_flip).mean()

    total = loc + size + angle_bin + angle_res + corner
    return {
        "loc": loc,
        "size": size,
        "angle_bin": angle_bin,
        "angle_res": angle_res,
        "corner": corner,
        "total": total,
    }


def loss_box(
    pred: Tensor,
    target: Box7,
    centroid: np.ndarray,
    mean_size: np.ndarray,
) -> dict[str, Tensor]:
    """Single-box form of loss_box_batch (head output shape (30,))."""
    if pred.shape != (BOX_HEAD_WIDTH,):
        raise ValueError(f"box head output must have shape ({BOX_HEAD_WIDTH},)")
    return loss_box_batch(
        pred.reshape(1, BOX_HEAD_WIDTH),
        [target],
        np.asarray(centroid, dtype=float).reshape(1, 3),
        np.asarray(mean_size, dtype=float).reshape(1, 3),
    )
