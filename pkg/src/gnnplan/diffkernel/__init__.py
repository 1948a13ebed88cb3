"""Minimal differentiable kernel: graph filters, attention, pooling, dense
layers, losses, Adam and a finite-difference checker."""
from .gradcheck import GradReport, check_gradients, rel_error
from .layers import (
    Dense,
    GATLayer,
    GraphConv,
    GraphMaxPool,
    Sequential,
    Tanh,
    broadcast_append,
    broadcast_append_backward,
    gaussian_kl,
    squared_error,
)
from .optim import Adam


def shift_apply(shift, x):
    """``S x`` for a sparse shift operator (no dense power is ever formed)."""
    return shift.apply(x)


def graph_conv_forward(layer, shift, x):
    return layer.forward(x, shift)


def gat_forward(layer, shift, x):
    return layer.forward(x, shift)


def graph_maxpool(x):
    return GraphMaxPool().forward(x)


__all__ = [
    "Adam",
    "Dense",
    "GATLayer",
    "GradReport",
    "GraphConv",
    "GraphMaxPool",
    "Sequential",
    "Tanh",
    "broadcast_append",
    "broadcast_append_backward",
    "check_gradients",
    "gat_forward",
    "gaussian_kl",
    "graph_conv_forward",
    "graph_maxpool",
    "rel_error",
    "shift_apply",
    "squared_error",
]
