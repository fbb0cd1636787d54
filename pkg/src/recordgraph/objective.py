"""Contrastive (InfoNCE) and pair-wise ranking losses over node embeddings.

Similarities are ``exp(q . h / tau)``; everything is evaluated on the
log scale (log-sum-exp, softplus) so large dot products do not overflow.
Gradients are returned with respect to each graph's node-embedding matrix;
query embeddings are frozen.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.07
    alpha: float = 0.9
    max_rank_pairs: int = 256
    full_pairs_limit: int = 64
    use_in_batch_negatives: bool = True
    in_batch_negatives: str = "positives"  # or "all"
    seed: int = 0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.in_batch_negatives not in ("positives", "all"):
            raise ValueError(f"unknown in-batch negative set {self.in_batch_negatives!r}")


@dataclass
class RankedQuery:
    """One training query: its frozen embedding and its graph's node order."""

    graph: int
    query: np.ndarray
    order: np.ndarray  # node indices, best first; order[0] is the positive

    @property
    def positive(self) -> int:
        return int(self.order[0])


@dataclass(frozen=True)
class LossReport:
    l_cl: float
    l_rank: float
    total: float
    entropy: float


def log_sim(q: np.ndarray, h: np.ndarray, tau: float) -> float:
    return float(np.dot(q, h)) / tau


def sim_s(q: np.ndarray, h: np.ndarray, tau: float) -> float:
    return float(np.exp(log_sim(q, h, tau)))


def _logsumexp(x: np.ndarray) -> float:
    m = x.max()
    return float(m + np.log(np.exp(x - m).sum()))


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_batch(queries: list[RankedQuery]) -> None:
    if not queries:
        raise ValueError("empty batch")


def contrastive_loss(
    queries: list[RankedQuery], node_embs: list[np.ndarray], config: LossConfig
) -> tuple[float, list[np.ndarray]]:
    """InfoNCE: positive against every other node of its graph plus in-batch negatives.

    In-batch negatives for a query of graph g are the positives of the other
    graphs' queries in the batch (``"positives"``) or all their nodes
    (``"all"``).
    """
    _check_batch(queries)
    tau = config.tau
    grads = [np.zeros_like(h) for h in node_embs]
    n_graphs = len(node_embs)
    extra: dict[int, list[tuple[int, int]]] = {}
    if config.use_in_batch_negatives and n_graphs > 1:
        if config.in_batch_negatives == "all":
            pool = {g: [(g, i) for i in range(len(node_embs[g]))] for g in range(n_graphs)}
        else:
            pos: dict[int, set[int]] = {}
            for rq in queries:
                pos.setdefault(rq.graph, set()).add(rq.positive)
            pool = {g: [(g, i) for i in sorted(pos.get(g, ()))] for g in range(n_graphs)}
        for g in range(n_graphs):
            extra[g] = [c for g2 in range(n_graphs) if g2 != g for c in pool[g2]]
    total = 0.0
    n = len(queries)
    for rq in queries:
        own = node_embs[rq.graph]
        logits = own @ rq.query / tau
        others = extra.get(rq.graph, [])
        if others:
            other_h = np.stack([node_embs[g][i] for g, i in others])
            logits = np.concatenate([logits, other_h @ rq.query / tau])
        lse = _logsumexp(logits)
        total += lse - logits[rq.positive]
        p = np.exp(logits - lse)
        p[rq.positive] -= 1.0
        coef = p / (tau * n)
        grads[rq.graph] += np.outer(coef[: len(own)], rq.query)
        for (g, i), c in zip(others, coef[len(own):]):
            grads[g][i] += c * rq.query
    return total / n, grads


def rank_pairs(n: int, config: LossConfig, rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Rank-position pairs (i, j), i ranked better than j, used by the ranking loss.

    All pairs for lists up to ``full_pairs_limit``; beyond that the positive
    paired with every other position plus ``max_rank_pairs`` random pairs.
    """
    if n < 2:
        raise ValueError("ranking list needs at least 2 entries")
    if n <= config.full_pairs_limit:
        return np.triu_indices(n, k=1)
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    a = rng.integers(0, n, size=config.max_rank_pairs)
    b = rng.integers(0, n - 1, size=config.max_rank_pairs)
    b = b + (b >= a)  # distinct from a
    i = np.concatenate([np.zeros(n - 1, dtype=np.int64), np.minimum(a, b)])
    j = np.concatenate([np.arange(1, n), np.maximum(a, b)])
    return i, j


def ranking_loss(
    queries: list[RankedQuery],
    node_embs: list[np.ndarray],
    config: LossConfig,
    rng: np.random.Generator | None = None,
) -> tuple[float, list[np.ndarray]]:
    """Mean over queries of sum over ranked pairs of softplus((d_j - d_i) / tau)."""
    _check_batch(queries)
    tau = config.tau
    grads = [np.zeros_like(h) for h in node_embs]
    total = 0.0
    n = len(queries)
    for rq in queries:
        own = node_embs[rq.graph]
        d = own[rq.order] @ rq.query
        i, j = rank_pairs(len(d), config, rng)
        x = (d[j] - d[i]) / tau
        total += float(_softplus(x).sum())
        w = _sigmoid(x) / (tau * n)
        dd = np.bincount(j, w, minlength=len(d)) - np.bincount(i, w, minlength=len(d))
        dnode = np.zeros(len(own))
        dnode[rq.order] = dd
        grads[rq.graph] += np.outer(dnode, rq.query)
    return total / n, grads


def similarity_entropy(q: np.ndarray, node_embs: np.ndarray, tau: float) -> float:
    """Shannon entropy (nats) of softmax(node_embs @ q / tau)."""
    logits = node_embs @ q / tau
    lse = _logsumexp(logits)
    logp = logits - lse
    return float(max(-(np.exp(logp) * logp).sum(), 0.0))


def total_loss(
    queries: list[RankedQuery],
    node_embs: list[np.ndarray],
    config: LossConfig,
    rng: np.random.Generator | None = None,
) -> tuple[LossReport, list[np.ndarray]]:
    l_cl, g_cl = contrastive_loss(queries, node_embs, config)
    l_rank, g_rank = ranking_loss(queries, node_embs, config, rng)
    a = config.alpha
    entropy = float(np.mean([similarity_entropy(rq.query, node_embs[rq.graph], config.tau) for rq in queries]))
    grads = [gc + a * gr for gc, gr in zip(g_cl, g_rank)]
    return LossReport(l_cl, l_rank, l_cl + a * l_rank, entropy), grads
