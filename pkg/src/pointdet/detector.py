"""Contextual centroid perception, vote aggregation, proposals, postprocess."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import geometry, neighborhood, sampling
from .data_io import CLASS_NAMES, DEFAULT_MEAN_SIZES, LabeledScene
from .errors import ConfigError, DataError
from .geometry import Box7, ScoredBox
from .nn.autodiff import Tensor, concat
from .nn.layers import MlpSpec, forward_mlp, init_mlp_params
from .nn.losses import (
    BOX_HEAD_WIDTH,
    LossBreakdown,
    decode_box,
    loss_box_batch,
    loss_centroid,
    loss_cls_aware,
    loss_ctr_aware,
)


@dataclass(frozen=True)
class ContextConfig:
    """How supervision membership extends beyond the annotated box.

    mode: none (original box), factor (scale sizes), length (add meters),
    centers (only the representative point nearest each instance center).
    """

    mode: str = "length"
    amount: float = 1.0

    def __post_init__(self):
        if self.mode not in ("none", "factor", "length", "centers"):
            raise ConfigError(f"unknown context mode {self.mode!r}")
        if self.mode in ("factor", "length") and not self.amount > 0:
            raise ConfigError("context amount must be positive")


@dataclass
class EncoderLayerSpec:
    strategy: str          # d-fps | feat-fps | random | cls-aware | ctr-aware
    npoint: int
    radii: tuple[float, ...]
    nquery: tuple[int, ...]
    scale_dims: tuple[tuple[int, ...], ...]
    post_dims: tuple[int, ...]


@dataclass
class DetectorConfig:
    """Layer sizes, radii, sampling schedule, heads, loss weights."""

    class_names: tuple[str, ...] = CLASS_NAMES
    mean_sizes: np.ndarray = field(default_factory=lambda: DEFAULT_MEAN_SIZES.copy())
    layers: list[EncoderLayerSpec] = field(default_factory=list)
    score_head_hidden: tuple[int, ...] = (256,)
    vote_head_hidden: tuple[int, ...] = (128,)
    agg_radii: tuple[float, ...] = (4.8, 6.4)
    agg_nquery: tuple[int, ...] = (16, 32)
    agg_scale_dims: tuple[tuple[int, ...], ...] = ((356, 356, 512), (256, 512, 1024))
    agg_post_dims: tuple[int, ...] = (512,)
    head_hidden: tuple[int, ...] = (256, 256)
    context: ContextConfig = field(default_factory=ContextConfig)
    nms_iou: float = 0.01
    score_threshold: float = 0.3
    loss_weights: dict = field(
        default_factory=lambda: {"sample": 1.0, "cent": 1.0, "cls": 1.0, "box": 1.0}
    )

    def __post_init__(self):
        self.mean_sizes = np.asarray(self.mean_sizes, dtype=float)
        if len(self.mean_sizes) != len(self.class_names):
            raise ConfigError("mean_sizes rows must match class_names")

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_sizes"] = self.mean_sizes.tolist()
        d["context"] = {"mode": self.context.mode, "amount": self.context.amount}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorConfig":
        d = dict(d)
        d["class_names"] = tuple(d["class_names"])
        d["mean_sizes"] = np.asarray(d["mean_sizes"], dtype=float)
        d["layers"] = [
            EncoderLayerSpec(
                strategy=l["strategy"],
                npoint=int(l["npoint"]),
                radii=tuple(l["radii"]),
                nquery=tuple(l["nquery"]),
                scale_dims=tuple(tuple(x) for x in l["scale_dims"]),
                post_dims=tuple(l["post_dims"]),
            )
            for l in d["layers"]
        ]
        for key in ("score_head_hidden", "vote_head_hidden", "agg_radii",
                    "agg_nquery", "agg_post_dims", "head_hidden"):
            d[key] = tuple(d[key])
        d["agg_scale_dims"] = tuple(tuple(x) for x in d["agg_scale_dims"])
        d["context"] = ContextConfig(**d["context"])
        return cls(**d)


def kitti_config() -> DetectorConfig:
    """Full-scale layer/radius/dimension constants (KITTI point budgets)."""
    return DetectorConfig(
        layers=[
            EncoderLayerSpec("d-fps", 4096, (0.2, 0.8), (16, 32),
                             ((16, 16, 32), (32, 32, 64)), (64,)),
            EncoderLayerSpec("d-fps", 1024, (0.8, 1.6), (16, 32),
                             ((64, 64, 128), (64, 96, 128)), (128,)),
            EncoderLayerSpec("ctr-aware", 512, (1.6, 4.8), (16, 32),
                             ((128, 128, 256), (128, 256, 256)), (256,)),
            EncoderLayerSpec("ctr-aware", 256, (1.6, 4.8), (16, 32),
                             ((128, 128, 256), (128, 256, 256)), (256,)),
        ],
        score_head_hidden=(256,),
        vote_head_hidden=(128,),
        agg_radii=(4.8, 6.4),
        agg_nquery=(16, 32),
        agg_scale_dims=((356, 356, 512), (256, 512, 1024)),
        agg_post_dims=(512,),
        head_hidden=(256, 256),
    )


def toy_config(context: ContextConfig | None = None) -> DetectorConfig:
    """Desk-scale detector for synthetic scenes of a few thousand points."""
    return DetectorConfig(
        layers=[
            EncoderLayerSpec("d-fps", 512, (0.6, 1.2), (8, 16),
                             ((16, 32), (16, 32)), (64,)),
            EncoderLayerSpec("ctr-aware", 256, (1.2, 2.4), (8, 16),
                             ((32, 64), (32, 64)), (128,)),
            EncoderLayerSpec("ctr-aware", 128, (2.4, 4.8), (8, 16),
                             ((64, 128), (64, 128)), (128,)),
        ],
        score_head_hidden=(64,),
        vote_head_hidden=(64,),
        agg_radii=(2.0, 4.0),
        agg_nquery=(8, 16),
        agg_scale_dims=((128, 128), (128, 128)),
        agg_post_dims=(256,),
        head_hidden=(128, 128),
        context=context or ContextConfig("length", 1.0),
        score_threshold=0.3,
        nms_iou=0.01,
    )


@dataclass
class VoteSet:
    """Representative points, predicted offsets, shifted positions, membership."""

    indices: np.ndarray          # original-cloud indices of representative points
    positions: np.ndarray        # (M, 3)
    offsets: Tensor              # (M, 3)
    shifted: np.ndarray          # (M, 3)
    membership: np.ndarray       # (M,) instance id or -1


@dataclass
class Proposal:
    box: Box7
    scores: np.ndarray           # per-class confidences in [0, 1]

    @property
    def score(self) -> float:
        return float(self.scores.max())

    @property
    def class_id(self) -> int:
        return int(self.scores.argmax())


@dataclass
class ForwardState:
    """Everything the loss and the decoder need from one forward pass."""

    sample_logits: list[tuple[Tensor, np.ndarray, np.ndarray]]  # (logits, positions, orig idx)
    votes: VoteSet
    cls_logits: Tensor           # (M, C)
    reg_out: Tensor              # (M, 30)
    final_features: Tensor


def assign_membership(
    points: np.ndarray, boxes: Sequence[Box7], config: ContextConfig
) -> np.ndarray:
    """Instance id per point (-1 for none). Points inside several expanded
    boxes go to the box with the nearest center. 'centers' mode marks only
    the single point nearest each instance center."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    out = np.full(len(points), -1, dtype=np.int64)
    if not len(points) or not boxes:
        return out
    if config.mode == "centers":
        for b in boxes:
            if b.instance_id is None:
                continue
            d = np.sum((points - b.center) ** 2, axis=1)
            out[int(np.argmin(d))] = b.instance_id
        return out
    best_d = np.full(len(points), np.inf)
    for b in boxes:
        if b.instance_id is None:
            continue
        query = b if config.mode == "none" else geometry.expand(b, config.mode, config.amount)
        inside = geometry.points_in_box(points, query)
        d = np.sum((points - b.center) ** 2, axis=1)
        take = inside & (d < best_d)
        out[take] = b.instance_id
        best_d[take] = d[take]
    return out


class Detector:
    """Single-stage point detector: instance-aware encoder, centroid votes,
    instance aggregation, and a class+box proposal head."""

    INPUT_FEATURES = 1  # per-point intensity channel (zeros when absent)

    def __init__(self, config: DetectorConfig, seed: int = 0):
        self.config = config
        self.params: dict[str, Tensor] = {}
        self._specs: dict[str, MlpSpec] = {}
        # D-FPS on a fixed cloud is deterministic; cache per training cloud.
        self._dfps_cache: dict[tuple[int, int, int], np.ndarray] = {}
        rng = np.random.default_rng(seed)
        c = config

        in_width = self.INPUT_FEATURES
        for li, layer in enumerate(c.layers):
            if layer.strategy in sampling.TOPK_STRATEGIES:
                self._add_mlp(f"enc{li}.score",
                              MlpSpec((in_width, *c.score_head_hidden, c.num_classes)), rng)
            for si, dims in enumerate(layer.scale_dims):
                self._add_mlp(f"enc{li}.scale{si}", MlpSpec((3 + in_width, *dims)), rng)
            fused = sum(d[-1] for d in layer.scale_dims)
            self._add_mlp(f"enc{li}.post", MlpSpec((fused, *layer.post_dims)), rng)
            in_width = layer.post_dims[-1]

        self.backbone_width = in_width
        self._add_mlp("vote", MlpSpec((in_width, *c.vote_head_hidden, 3)), rng)
        for si, dims in enumerate(c.agg_scale_dims):
            self._add_mlp(f"agg.scale{si}", MlpSpec((3 + in_width, *dims)), rng)
        fused = sum(d[-1] for d in c.agg_scale_dims)
        self._add_mlp("agg.post", MlpSpec((fused, *c.agg_post_dims)), rng)
        agg_out = c.agg_post_dims[-1]
        self._add_mlp("cls", MlpSpec((agg_out, *c.head_hidden, c.num_classes)), rng)
        self._add_mlp("reg", MlpSpec((agg_out, *c.head_hidden, BOX_HEAD_WIDTH)), rng)
        # Zero-init the final vote layer so initial votes stay at the points.
        self.params["vote.w_last"].data[:] = 0.0

    def _add_mlp(self, name: str, spec: MlpSpec, rng: np.random.Generator):
        self._specs[name] = spec
        params = init_mlp_params(spec, rng)
        n_layers = len(spec.widths) - 1
        for i in range(n_layers):
            suffix_w = f"w{i}" if i < n_layers - 1 else "w_last"
            suffix_b = f"b{i}" if i < n_layers - 1 else "b_last"
            self.params[f"{name}.{suffix_w}"] = params[2 * i]
            self.params[f"{name}.{suffix_b}"] = params[2 * i + 1]

    def _mlp(self, name: str, x: Tensor) -> Tensor:
        spec = self._specs[name]
        n_layers = len(spec.widths) - 1
        plist = []
        for i in range(n_layers):
            sw = f"w{i}" if i < n_layers - 1 else "w_last"
            sb = f"b{i}" if i < n_layers - 1 else "b_last"
            plist += [self.params[f"{name}.{sw}"], self.params[f"{name}.{sb}"]]
        return forward_mlp(spec, plist, x)

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    # -- forward -----------------------------------------------------------

    def _sa(self, name: str, layer_radii, layer_nquery, positions: np.ndarray,
            features: Tensor, centers: np.ndarray, n_scales: int) -> Tensor:
        cloud = sampling.PointCloud(positions)
        pooled = []
        for si in range(n_scales):
            groups = neighborhood.ball_query(cloud, centers, layer_radii[si], layer_nquery[si])
            rel = positions[groups.indices] - centers[:, None, :]
            block = concat([Tensor(rel), features[groups.indices]], axis=-1)
            feat = self._mlp(f"{name}.scale{si}", block)
            pooled.append(feat.max_pool(axis=1))
        fused = pooled[0] if len(pooled) == 1 else concat(pooled, axis=-1)
        return self._mlp(f"{name}.post", fused)

    def forward(self, cloud: sampling.PointCloud, seed: int = 0) -> ForwardState:
        c = self.config
        n = len(cloud)
        positions = cloud.coords
        if cloud.intensity is not None:
            feats = Tensor(cloud.intensity.reshape(-1, 1))
        else:
            feats = Tensor(np.zeros((n, 1)))
        orig_idx = np.arange(n)
        sample_logits: list[tuple[Tensor, np.ndarray, np.ndarray]] = []

        cacheable = True  # D-FPS prefix of the schedule is input-deterministic
        for li, layer in enumerate(c.layers):
            k = min(layer.npoint, len(positions))
            if layer.strategy == "d-fps":
                key = (id(cloud.coords), li, k)
                if cacheable and key in self._dfps_cache:
                    sel = self._dfps_cache[key]
                else:
                    sel = sampling.sample_dfps(sampling.PointCloud(positions), k).indices
                    if cacheable:
                        self._dfps_cache[key] = sel
            elif layer.strategy == "random":
                cacheable = False
                sel = sampling.sample_random(sampling.PointCloud(positions), k, seed + li).indices
            elif layer.strategy in sampling.TOPK_STRATEGIES:
                cacheable = False
                logits = self._mlp(f"enc{li}.score", feats)
                sample_logits.append((logits, positions, orig_idx))
                fg = 1.0 / (1.0 + np.exp(-logits.data))
                sel = sampling.sample_topk(fg.max(axis=1), k).indices
            else:
                raise ConfigError(f"unknown encoder strategy {layer.strategy!r}")
            centers = positions[sel]
            new_feats = self._sa(f"enc{li}", layer.radii, layer.nquery,
                                 positions, feats, centers, len(layer.scale_dims))
            positions, feats, orig_idx = centers, new_feats, orig_idx[sel]

        offsets = self._mlp("vote", feats)
        shifted = positions + offsets.data
        votes = VoteSet(orig_idx, positions, offsets, shifted,
                        np.full(len(positions), -1, dtype=np.int64))

        agg = self._sa("agg", c.agg_radii, c.agg_nquery, shifted, feats,
                       shifted, len(c.agg_scale_dims))
        cls_logits = self._mlp("cls", agg)
        reg_out = self._mlp("reg", agg)
        return ForwardState(sample_logits, votes, cls_logits, reg_out, feats)

    # -- losses ------------------------------------------------------------

    def compute_losses(self, scene: LabeledScene, state: ForwardState
                       ) -> tuple[Tensor, LossBreakdown]:
        c = self.config
        boxes = scene.boxes
        w = c.loss_weights

        # Downsampling strategy loss at every learned sampling layer.
        sample_terms = []
        for logits, positions, _orig in state.sample_logits:
            labels = np.zeros((len(positions), c.num_classes))
            masks = np.zeros(len(positions))
            for b in boxes:
                inside = geometry.points_in_box(positions, b)
                labels[inside] = 0.0
                labels[inside, b.class_id] = 1.0
                masks[inside] = geometry.soft_point_masks(positions[inside], b)
            sample_terms.append(loss_ctr_aware(logits, labels, masks))
        if sample_terms:
            l_sample = sample_terms[0]
            for t in sample_terms[1:]:
                l_sample = l_sample + t
        else:
            l_sample = Tensor(0.0)

        # Contextual centroid prediction on the representative points.
        votes = state.votes
        membership = assign_membership(votes.positions, boxes, c.context)
        votes.membership = membership
        gt_centers = {b.instance_id: b.center for b in boxes if b.instance_id is not None}
        l_cent, _skipped = loss_centroid(votes.offsets, votes.positions, membership, gt_centers)

        # Proposal classification: positives carry their instance class.
        by_inst = {b.instance_id: b for b in boxes if b.instance_id is not None}
        labels = np.zeros((len(votes.positions), c.num_classes))
        for i, inst in enumerate(membership):
            if inst >= 0:
                labels[i, by_inst[inst].class_id] = 1.0
        l_cls = loss_cls_aware(state.cls_logits, labels)

        # Box regression on positives, anchored at the shifted positions.
        breakdown_parts = np.zeros(5)
        positives = np.flatnonzero(membership >= 0)
        if len(positives):
            targets = [by_inst[membership[i]] for i in positives]
            mean_sizes = np.stack([c.mean_sizes[t.class_id] for t in targets])
            parts = loss_box_batch(state.reg_out[positives], targets,
                                   votes.shifted[positives], mean_sizes)
            l_box = parts["total"]
            breakdown_parts[:] = [float(parts[k].data) for k in
                                  ("loc", "size", "angle_bin", "angle_res", "corner")]
        else:
            l_box = Tensor(0.0)

        total = (w["sample"] * l_sample + w["cent"] * l_cent
                 + w["cls"] * l_cls + w["box"] * l_box)
        breakdown = LossBreakdown(
            sample=float(l_sample.data), cent=float(l_cent.data), cls=float(l_cls.data),
            loc=breakdown_parts[0], size=breakdown_parts[1],
            angle_bin=breakdown_parts[2], angle_res=breakdown_parts[3],
            corner=breakdown_parts[4],
        )
        return total, breakdown

    # -- inference ---------------------------------------------------------

    def propose(self, state: ForwardState) -> list[Proposal]:
        c = self.config
        probs = 1.0 / (1.0 + np.exp(-state.cls_logits.data))
        proposals = []
        for i in range(len(probs)):
            class_id = int(np.argmax(probs[i]))
            box = decode_box(state.reg_out.data[i], state.votes.shifted[i],
                             c.mean_sizes[class_id], class_id)
            proposals.append(Proposal(box, probs[i].copy()))
        return proposals

    def postprocess(self, proposals: Sequence[Proposal],
                    iou_threshold: float | None = None,
                    score_threshold: float | None = None) -> list[Proposal]:
        """Score filter then class-agnostic greedy NMS, descending score."""
        iou_threshold = self.config.nms_iou if iou_threshold is None else iou_threshold
        score_threshold = (self.config.score_threshold
                           if score_threshold is None else score_threshold)
        kept = [p for p in proposals if p.score >= score_threshold]
        scored = [ScoredBox(p.box, min(1.0, p.score)) for p in kept]
        surviving = geometry.nms_3d(scored, iou_threshold)
        # Map back to proposals (nms preserves identity through box+score).
        used = set()
        out = []
        for sb in surviving:
            for j, p in enumerate(kept):
                if j not in used and p.box is sb.box:
                    out.append(p)
                    used.add(j)
                    break
        return out

    def detect(self, cloud: sampling.PointCloud, seed: int = 0) -> list[Proposal]:
        state = self.forward(cloud, seed=seed)
        return self.postprocess(self.propose(state))

    # -- persistence -------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        if set(arrays) != set(self.params):
            missing = set(self.params) ^ set(arrays)
            raise DataError(f"checkpoint/config mismatch on parameters: {sorted(missing)[:5]}")
        for name, arr in arrays.items():
            if arr.shape != self.params[name].data.shape:
                raise DataError(
                    f"checkpoint/config mismatch: {name} has shape {arr.shape}, "
                    f"expected {self.params[name].data.shape}"
                )
            self.params[name].data = arr.astype(float).copy()


# ---------------------------------------------------------------------------
# detection record format: one line per detection, fixed precision 6
#   frame_id class_name score cx cy cz l w h yaw


def write_detections(path, frame_id: str, proposals: Sequence[Proposal],
                     class_names: Sequence[str] = CLASS_NAMES, append: bool = False) -> None:
    lines = []
    for p in proposals:
        b = p.box
        lines.append(
            f"{frame_id} {class_names[p.class_id]} {p.score:.6f} "
            f"{b.cx:.6f} {b.cy:.6f} {b.cz:.6f} {b.l:.6f} {b.w:.6f} {b.h:.6f} {b.yaw:.6f}"
        )
    mode = "a" if append else "w"
    with open(path, mode) as f:
        for line in lines:
            f.write(line + "\n")


def read_detections(path, class_names: Sequence[str] = CLASS_NAMES
                    ) -> dict[str, list[tuple[Box7, float]]]:
    """frame id -> [(box, score)], in file order."""
    out: dict[str, list[tuple[Box7, float]]] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        body = line.strip()
        if not body or body.startswith("#"):
            continue
        parts = body.split()
        if len(parts) != 10:
            raise DataError(f"{path}:{lineno}: expected 10 fields, got {len(parts)}")
        frame, name = parts[0], parts[1]
        if name not in class_names:
            raise DataError(f"{path}:{lineno}: unknown class {name!r}")
        score = float(parts[2])
        vals = [float(v) for v in parts[3:]]
        box = Box7(*vals, class_id=list(class_names).index(name))
        out.setdefault(frame, []).append((box, score))
    return out
