"""Finite-difference verification of GAT + loss gradients."""
from __future__ import annotations

import numpy as np

from recordgraph.nn.gat import GatConfig, GatModel, backward, batch_edge_index, edge_index, gat_forward
from recordgraph.objective import LossConfig, RankedQuery, total_loss


def _random_graph(rng: np.random.Generator, n_nodes: int, n_edges: int):
    pairs = set()
    while len(pairs) < n_edges:
        u, v = rng.integers(n_nodes, size=2)
        if u != v:
            pairs.add((int(u), int(v)))
    return edge_index(n_nodes, sorted(pairs))


def make_problem(
    seed: int,
    n_nodes: int = 6,
    dim: int = 8,
    heads: int = 2,
    n_graphs: int = 2,
    n_queries: int = 3,
    dropout: float = 0.0,
):
    """Random batch of small graphs with queries and rankings."""
    rng = np.random.default_rng(seed)
    hidden = dim // heads
    cfg = GatConfig(in_dim=dim, hidden_per_head=hidden, heads=heads, out_dim=dim, dropout=dropout)
    model = GatModel.init(cfg, int(rng.integers(2**31)))
    for k in ("l0.bias", "l1.bias"):
        model.params[k] = rng.normal(scale=0.1, size=model.params[k].shape)
    parts = [_random_graph(rng, n_nodes, n_nodes) for _ in range(n_graphs)]
    ei, offsets = batch_edge_index(parts)
    x = rng.normal(scale=0.5, size=(ei.n_nodes, dim))
    queries = [
        RankedQuery(g, rng.normal(scale=0.3, size=dim), rng.permutation(n_nodes))
        for g in range(n_graphs)
        for _ in range(n_queries)
    ]
    masks = None
    if dropout > 0:
        masks = {
            "l0.x": (rng.random((ei.n_nodes, dim)) >= dropout) / (1 - dropout),
            "l0.att": (rng.random((ei.n_edges, heads)) >= dropout) / (1 - dropout),
            "l1.x": (rng.random((ei.n_nodes, hidden * heads)) >= dropout) / (1 - dropout),
            "l1.att": (rng.random((ei.n_edges, heads)) >= dropout) / (1 - dropout),
        }
    return model, x, ei, offsets, queries, masks


def _loss_and_grads(model, x, ei, offsets, queries, masks, loss_cfg, want_grads):
    out, cache = gat_forward(model, x, ei, training=masks is not None, masks=masks)
    embs = [out[offsets[i] : offsets[i + 1]] for i in range(len(offsets) - 1)]
    report, g_embs = total_loss(queries, embs, loss_cfg)
    if not want_grads:
        return report.total, None
    return report.total, backward(model, cache, np.concatenate(g_embs))


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest elementwise |a - n| / max(|a|, |n|, floor)."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def grad_check(
    seed: int = 42,
    tau: float = 0.07,
    alpha: float = 0.5,
    dropout: float = 0.0,
    step: float = 1e-4,
    n_nodes: int = 6,
    dim: int = 8,
    heads: int = 2,
    max_entries: int | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks every entry of every parameter tensor unless ``max_entries`` caps
    the number of (randomly chosen) entries per tensor.
    """
    model, x, ei, offsets, queries, masks = make_problem(seed, n_nodes, dim, heads, dropout=dropout)
    loss_cfg = LossConfig(tau=tau, alpha=alpha)
    _, grads = _loss_and_grads(model, x, ei, offsets, queries, masks, loss_cfg, True)
    pick = np.random.default_rng(seed + 1)
    worst = 0.0
    for name, p in model.params.items():
        flat = p.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = pick.choice(flat.size, size=max_entries, replace=False)
        numeric = np.empty(len(entries))
        for n, idx in enumerate(entries):
            orig = flat[idx]
            flat[idx] = orig + step
            up, _ = _loss_and_grads(model, x, ei, offsets, queries, masks, loss_cfg, False)
            flat[idx] = orig - step
            down, _ = _loss_and_grads(model, x, ei, offsets, queries, masks, loss_cfg, False)
            flat[idx] = orig
            numeric[n] = (up - down) / (2 * step)
        worst = max(worst, relative_error(grads[name].reshape(-1)[entries], numeric))
    return worst
