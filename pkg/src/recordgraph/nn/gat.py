"""Two-layer multi-head graph attention network with hand-written gradients.

Layer 1 concatenates its heads and applies ELU; layer 2 averages its heads
with no output activation, so node embeddings stay in the retriever's space
and dot products with query embeddings are unbounded. Attention logits are
``leaky_relu(a_src . z_u + a_dst . z_v)`` for an edge u -> v, normalized by
softmax over each destination's incoming edges.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from recordgraph import kernels


class StaleCacheError(RuntimeError):
    """Backward was called with a cache from different parameters."""


class NonFiniteError(FloatingPointError):
    pass


@dataclass(frozen=True)
class GatConfig:
    in_dim: int = 768
    hidden_per_head: int = 192
    heads: int = 4
    out_dim: int = 768
    leaky_slope: float = 0.2
    dropout: float = 0.0

    @property
    def hidden_dim(self) -> int:
        return self.heads * self.hidden_per_head


@dataclass(frozen=True)
class EdgeIndex:
    """Message-passing edges sorted by (dst, src) with CSR pointers over dst."""

    n_nodes: int
    src: np.ndarray
    dst: np.ndarray
    indptr: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.src)


def edge_index(n_nodes: int, pairs) -> EdgeIndex:
    """Symmetrize ``pairs``, add a self-loop on every node, drop duplicates."""
    pairs = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
    loops = np.arange(n_nodes, dtype=np.int64)
    src = np.concatenate([pairs[:, 0], pairs[:, 1], loops])
    dst = np.concatenate([pairs[:, 1], pairs[:, 0], loops])
    if len(src) and (src.min() < 0 or src.max() >= n_nodes):
        raise ValueError("edge endpoint out of range")
    key = np.unique(dst * n_nodes + src)
    dst, src = np.divmod(key, n_nodes)
    indptr = np.searchsorted(dst, np.arange(n_nodes + 1)).astype(np.int64)
    return EdgeIndex(n_nodes, src, dst, indptr)


def graph_edge_index(g) -> EdgeIndex:
    idx = g.index()
    return edge_index(len(g.nodes), [(idx[s], idx[t]) for s, t in g.edges])


def batch_edge_index(parts: list[EdgeIndex]) -> tuple[EdgeIndex, np.ndarray]:
    """Disjoint union of several graphs; returns the union and node offsets."""
    offsets = np.cumsum([0] + [p.n_nodes for p in parts])
    src = np.concatenate([p.src + o for p, o in zip(parts, offsets)])
    dst = np.concatenate([p.dst + o for p, o in zip(parts, offsets)])
    edge_offsets = np.cumsum([0] + [p.n_edges for p in parts])
    indptr = np.concatenate(
        [[0]] + [p.indptr[1:] + eo for p, eo in zip(parts, edge_offsets)]
    ).astype(np.int64)
    return EdgeIndex(int(offsets[-1]), src, dst, indptr), offsets


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class GatModel:
    config: GatConfig
    params: dict[str, np.ndarray]
    version: int = 0

    @classmethod
    def init(cls, config: GatConfig, seed: int) -> "GatModel":
        rng = np.random.default_rng(seed)
        H, F, D, O = config.heads, config.hidden_per_head, config.in_dim, config.out_dim
        p = {
            "l0.W": _glorot(rng, (H, D, F), D, F),
            "l0.a_src": _glorot(rng, (H, F), F, 1),
            "l0.a_dst": _glorot(rng, (H, F), F, 1),
            "l0.bias": np.zeros(H * F),
            "l1.W": _glorot(rng, (H, H * F, O), H * F, O),
            "l1.a_src": _glorot(rng, (H, O), O, 1),
            "l1.a_dst": _glorot(rng, (H, O), O, 1),
            "l1.bias": np.zeros(O),
        }
        return cls(config, p)

    def copy(self) -> "GatModel":
        return GatModel(self.config, {k: v.copy() for k, v in self.params.items()}, self.version)

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())


@dataclass
class ForwardCache:
    ei: EdgeIndex
    model_version: int
    layers: list[dict] = field(default_factory=list)
    masks: dict[str, np.ndarray] = field(default_factory=dict)
    consumed: bool = False


def _dropout_mask(rng: np.random.Generator, shape, p: float) -> np.ndarray:
    keep = rng.random(shape) >= p
    return keep / (1.0 - p)


def _check_finite(y: np.ndarray, layer: int, node_ids) -> None:
    bad = ~np.all(np.isfinite(y), axis=1)
    if bad.any():
        i = int(np.argmax(bad))
        name = node_ids[i] if node_ids is not None else i
        raise NonFiniteError(f"layer {layer}: non-finite activation at node {name}")


def _layer_forward(params, prefix: str, x, ei: EdgeIndex, slope: float, last: bool, mx, ma) -> tuple[np.ndarray, dict]:
    W, a_src, a_dst, bias = (params[prefix + k] for k in ("W", "a_src", "a_dst", "bias"))
    if x.shape[1] != W.shape[1]:
        raise ValueError(f"layer {prefix[:-1]}: input width {x.shape[1]} != expected {W.shape[1]}")
    xd = x * mx if mx is not None else x
    z = np.matmul(xd[None], W)  # (H, N, F)
    s = np.einsum("hnf,hf->hn", z, a_src)
    t = np.einsum("hnf,hf->hn", z, a_dst)
    e = s[:, ei.src].T + t[:, ei.dst].T  # (E, H)
    logits = np.where(e > 0, e, slope * e)
    alpha = kernels.segment_softmax(logits, ei.indptr)
    alpha_d = alpha * ma if ma is not None else alpha
    agg = kernels.gather_aggregate(ei.indptr, ei.src, alpha_d, z)
    n = x.shape[0]
    if last:
        pre = agg.mean(axis=0) + bias
        y = pre
    else:
        pre = agg.transpose(1, 0, 2).reshape(n, -1) + bias
        y = np.where(pre > 0, pre, np.expm1(np.minimum(pre, 0.0)))
    cache = dict(xd=xd, z=z, e=e, alpha=alpha, alpha_d=alpha_d, pre=pre, mx=mx, ma=ma)
    return y, cache


def _layer_backward(params, prefix: str, c: dict, ei: EdgeIndex, slope: float, last: bool, dy) -> tuple[np.ndarray, dict]:
    W, a_src, a_dst = (params[prefix + k] for k in ("W", "a_src", "a_dst"))
    H = W.shape[0]
    n = dy.shape[0]
    if last:
        dpre = dy
        dagg = np.broadcast_to(dy / H, (H,) + dy.shape)
    else:
        pre = c["pre"]
        dpre = dy * np.where(pre > 0, 1.0, np.exp(np.minimum(pre, 0.0)))
        dagg = dpre.reshape(n, H, -1).transpose(1, 0, 2)
    grads = {prefix + "bias": dpre.sum(axis=0)}
    dalpha_d, dz = kernels.gather_aggregate_backward(ei.indptr, ei.src, c["alpha_d"], c["z"], dagg)
    dalpha = dalpha_d * c["ma"] if c["ma"] is not None else dalpha_d
    dlogits = kernels.segment_softmax_backward(c["alpha"], dalpha, ei.indptr)
    de = dlogits * np.where(c["e"] > 0, 1.0, slope)
    ds = np.stack([np.bincount(ei.src, de[:, h], minlength=n) for h in range(H)])
    dt = np.stack([np.bincount(ei.dst, de[:, h], minlength=n) for h in range(H)])
    z = c["z"]
    grads[prefix + "a_src"] = np.einsum("hnf,hn->hf", z, ds)
    grads[prefix + "a_dst"] = np.einsum("hnf,hn->hf", z, dt)
    dz = dz + ds[:, :, None] * a_src[:, None, :] + dt[:, :, None] * a_dst[:, None, :]
    grads[prefix + "W"] = np.matmul(c["xd"].T[None], dz)
    dxd = np.matmul(dz, W.transpose(0, 2, 1)).sum(axis=0)
    dx = dxd * c["mx"] if c["mx"] is not None else dxd
    return dx, grads


def gat_forward(
    model: GatModel,
    x: np.ndarray,
    ei: EdgeIndex,
    training: bool = False,
    rng: np.random.Generator | None = None,
    masks: dict[str, np.ndarray] | None = None,
    node_ids=None,
) -> tuple[np.ndarray, ForwardCache]:
    """Node embeddings for features ``x`` (N x in_dim) over edges ``ei``.

    Dropout (inverted, on layer inputs and attention weights) is applied only
    when ``training``; masks are drawn from ``rng`` unless given explicitly.
    """
    cfg = model.config
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != ei.n_nodes:
        raise ValueError(f"features shape {x.shape} does not match {ei.n_nodes} nodes")
    cache = ForwardCache(ei, model.version)
    if training and cfg.dropout > 0:
        if masks is None:
            if rng is None:
                raise ValueError("training with dropout needs an rng or explicit masks")
            masks = {
                "l0.x": _dropout_mask(rng, (ei.n_nodes, cfg.in_dim), cfg.dropout),
                "l0.att": _dropout_mask(rng, (ei.n_edges, cfg.heads), cfg.dropout),
                "l1.x": _dropout_mask(rng, (ei.n_nodes, cfg.hidden_dim), cfg.dropout),
                "l1.att": _dropout_mask(rng, (ei.n_edges, cfg.heads), cfg.dropout),
            }
        cache.masks = masks
    elif training and masks is not None:
        cache.masks = masks
    h = x
    for layer in (0, 1):
        prefix = f"l{layer}."
        h, lc = _layer_forward(
            model.params, prefix, h, ei, cfg.leaky_slope, layer == 1,
            cache.masks.get(prefix + "x"), cache.masks.get(prefix + "att"),
        )
        _check_finite(h, layer, node_ids)
        cache.layers.append(lc)
    return h, cache


def backward(model: GatModel, cache: ForwardCache, grad_out: np.ndarray, return_input_grad: bool = False):
    """Parameter gradients of ``sum(grad_out * forward_output)``."""
    if cache.model_version != model.version or len(cache.layers) != 2:
        raise StaleCacheError("forward cache does not belong to the current parameters")
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != (cache.ei.n_nodes, model.config.out_dim):
        raise ValueError(f"upstream gradient shape {grad_out.shape} does not match output")
    slope = model.config.leaky_slope
    grads: dict[str, np.ndarray] = {}
    d = grad_out
    for layer in (1, 0):
        d, g = _layer_backward(model.params, f"l{layer}.", cache.layers[layer], cache.ei, slope, layer == 1, d)
        grads.update(g)
    if return_input_grad:
        return grads, d
    return grads
