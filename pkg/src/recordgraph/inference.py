"""Retrieval over learned node embeddings and summary generation."""
from __future__ import annotations

import hashlib
import json

from dataclasses import dataclass

import numpy as np

from recordgraph.checkpoint import model_hash
from recordgraph.nn.gat import GatModel, gat_forward, graph_edge_index
from recordgraph.providers import EmbeddingProvider, LlmClient, rag_prompt
from recordgraph.records import GraphOfRecords, dot_scores, rank_by_dot


@dataclass(frozen=True)
class RetrievalResult:
    query: str
    node_ids: list[str]
    scores: list[float]


def graph_fingerprint(g: GraphOfRecords) -> str:
    """Content hash of the parts of a graph the encoder reads."""
    h = hashlib.sha256()
    h.update(json.dumps([g.doc_id, [n.node_id for n in g.nodes], g.edges]).encode("utf-8"))
    h.update(np.ascontiguousarray(g.embedding_matrix(), dtype="<f8").tobytes())
    return h.hexdigest()


class EmbeddingCache:
    """Eval-mode node embeddings memoized per (graph, parameters)."""

    def __init__(self):
        self._store: dict[tuple[str, str], np.ndarray] = {}
        self.computed = 0

    def get(self, g: GraphOfRecords, model: GatModel) -> np.ndarray:
        key = (graph_fingerprint(g), model_hash(model))
        hit = self._store.get(key)
        if hit is None:
            hit = compute_node_embeddings(g, model)
            hit.flags.writeable = False
            self._store[key] = hit
            self.computed += 1
        return hit


def compute_node_embeddings(g: GraphOfRecords, model: GatModel) -> np.ndarray:
    x = g.embedding_matrix()
    if x.shape[1] != model.config.in_dim:
        raise ValueError(f"graph embeddings have dim {x.shape[1]}, model expects {model.config.in_dim}")
    out, _ = gat_forward(model, x, graph_edge_index(g), training=False, node_ids=[n.node_id for n in g.nodes])
    return out


_default_cache = EmbeddingCache()


def node_embeddings_for_inference(g: GraphOfRecords, model: GatModel, cache: EmbeddingCache | None = None) -> np.ndarray:
    return (cache or _default_cache).get(g, model)


def retrieve_top_k(
    query: str | np.ndarray,
    g: GraphOfRecords,
    model: GatModel,
    emb: EmbeddingProvider | None = None,
    k: int = 6,
    chunks_only: bool = False,
    cache: EmbeddingCache | None = None,
) -> RetrievalResult:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not g.nodes:
        raise ValueError(f"graph {g.doc_id!r} is empty")
    q = emb.embed_query(query) if isinstance(query, str) else np.asarray(query)
    h = node_embeddings_for_inference(g, model, cache)
    keep = np.array([not chunks_only or n.kind == "chunk" for n in g.nodes])
    cand = np.flatnonzero(keep)
    order = cand[rank_by_dot(q, h[cand])][:k]
    scores = dot_scores(q, h[order])
    return RetrievalResult(query if isinstance(query, str) else "", [g.nodes[i].node_id for i in order], scores.tolist())


def summarize(
    query: str,
    g: GraphOfRecords,
    model: GatModel,
    llm: LlmClient,
    emb: EmbeddingProvider,
    k: int = 6,
    chunks_only: bool = False,
    cache: EmbeddingCache | None = None,
) -> tuple[str, RetrievalResult]:
    """Generate a summary from the top-``k`` nodes, highest score first."""
    res = retrieve_top_k(query, g, model, emb, k, chunks_only, cache)
    by_id = {n.node_id: n for n in g.nodes}
    prompt = rag_prompt([by_id[i].text for i in res.node_ids], query)
    return llm.llm_generate(prompt, 0.0), res


def summary_record(doc_id: str, summary: str, res: RetrievalResult, g: GraphOfRecords, model: GatModel) -> dict:
    kinds = {n.node_id: n.kind for n in g.nodes}
    return {
        "doc_id": doc_id,
        "query": res.query,
        "summary": summary,
        "retrieved": [{"node_id": i, "kind": kinds[i], "score": s} for i, s in zip(res.node_ids, res.scores)],
        "checkpoint_hash": model_hash(model),
    }


def label_top1_accuracy(graphs: list[GraphOfRecords], model: GatModel, emb: EmbeddingProvider) -> float:
    """Share of training queries whose own label chunk is the top-1 node."""
    hits = total = 0
    for g in graphs:
        h = compute_node_embeddings(g, model)
        idx = g.index()
        for query, label in g.training_pairs:
            top = int(rank_by_dot(emb.embed_query(query), h)[0])
            hits += top == idx[label]
            total += 1
    return hits / total if total else 0.0
