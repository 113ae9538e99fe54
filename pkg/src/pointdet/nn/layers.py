"""Shared MLPs and max-pooling set abstraction on the autodiff engine."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Tensor, concat

ACTIVATIONS = ("relu", "none", "sigmoid")


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths plus per-layer nonlinearity tags."""

    widths: tuple[int, ...]
    activations: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("an MLP needs at least input and output widths")
        if any(w <= 0 for w in self.widths):
            raise ValueError(f"widths must be positive, got {self.widths}")
        acts = self.activations or ("relu",) * (len(self.widths) - 2) + ("none",)
        if len(acts) != len(self.widths) - 1:
            raise ValueError("need one activation per layer")
        if any(a not in ACTIVATIONS for a in acts):
            raise ValueError(f"unknown activation in {acts}")
        object.__setattr__(self, "activations", tuple(acts))

    @property
    def in_width(self) -> int:
        return self.widths[0]

    @property
    def out_width(self) -> int:
        return self.widths[-1]


def init_mlp_params(spec: MlpSpec, rng: np.random.Generator) -> list[Tensor]:
    """He-style initialization; returns [W0, b0, W1, b1, ...]."""
    params: list[Tensor] = []
    for fan_in, fan_out in zip(spec.widths, spec.widths[1:]):
        scale = np.sqrt(2.0 / fan_in)
        params.append(Tensor(rng.normal(0.0, scale, size=(fan_in, fan_out)), requires_grad=True))
        params.append(Tensor(np.zeros(fan_out), requires_grad=True))
    return params


def forward_mlp(spec: MlpSpec, params: Sequence[Tensor], x: Tensor) -> Tensor:
    """Chained affine + nonlinearity; input last dimension must match."""
    if x.shape[-1] != spec.in_width:
        raise ValueError(f"input width {x.shape[-1]} != spec width {spec.in_width}")
    flat = x.reshape(-1, spec.in_width) if x.data.ndim != 2 else x
    h = flat
    for i, act in enumerate(spec.activations):
        h = h @ params[2 * i] + params[2 * i + 1]
        if act == "relu":
            h = h.relu()
        elif act == "sigmoid":
            h = h.sigmoid()
    if x.data.ndim != 2:
        h = h.reshape(*x.shape[:-1], spec.out_width)
    return h


def sa_layer(
    grouped: Sequence[np.ndarray],
    scale_specs: Sequence[MlpSpec],
    scale_params: Sequence[Sequence[Tensor]],
    post_spec: MlpSpec,
    post_params: Sequence[Tensor],
) -> Tensor:
    """Set abstraction: shared MLP per neighbor, max-pool over the neighbor
    axis per scale, concat across scales, then the post-concat MLP."""
    pooled = []
    for block, spec, params in zip(grouped, scale_specs, scale_params):
        x = Tensor(block)  # (M, nquery, C)
        feat = forward_mlp(spec, params, x)
        pooled.append(feat.max_pool(axis=1))  # (M, out)
    fused = pooled[0] if len(pooled) == 1 else concat(pooled, axis=-1)
    return forward_mlp(post_spec, post_params, fused)
