"""Minimal dense autodiff engine, MLP/set-abstraction layers, detector losses,
and the Adam/one-cycle optimizer."""

from .autodiff import Tensor, concat, log_softmax
from .layers import MlpSpec, forward_mlp, init_mlp_params, sa_layer
from .losses import (
    LossBreakdown,
    angle_bin_encode,
    decode_box,
    encode_box_target,
    loss_box,
    loss_centroid,
    loss_cls_aware,
    loss_ctr_aware,
)
from .optim import Adam, OneCycleSchedule, Sgd
from .checkpoint import load_checkpoint, save_checkpoint
