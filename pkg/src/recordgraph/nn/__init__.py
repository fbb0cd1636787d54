"""Graph attention network, optimizer and gradient checking."""
from recordgraph.nn.gat import (
    EdgeIndex,
    ForwardCache,
    GatConfig,
    GatModel,
    NonFiniteError,
    StaleCacheError,
    backward,
    batch_edge_index,
    edge_index,
    gat_forward,
    graph_edge_index,
)
from recordgraph.nn.optim import AdamState, adam_step, lr_at

__all__ = [
    "AdamState",
    "EdgeIndex",
    "ForwardCache",
    "GatConfig",
    "GatModel",
    "NonFiniteError",
    "StaleCacheError",
    "adam_step",
    "backward",
    "batch_edge_index",
    "edge_index",
    "gat_forward",
    "graph_edge_index",
    "lr_at",
]
