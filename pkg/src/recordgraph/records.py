"""Graph of records: chunks and LLM responses wired by retrieval provenance.

Each round simulates a query from a random chunk, retrieves over the chunks
plus every earlier response, generates a response, and links each retrieved
node to the new response node.
"""
from __future__ import annotations

import functools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from recordgraph.corpus import Chunk
from recordgraph.providers import EmbeddingProvider, LlmClient, rag_prompt

log = logging.getLogger(__name__)

GRAPH_VERSION = 1
MAX_QUERY_ATTEMPTS = 10


class GraphBuildError(RuntimeError):
    def __init__(self, message: str, round_index: int | None = None):
        super().__init__(message)
        self.round_index = round_index


class GraphFormatError(ValueError):
    """A graph file cannot be read."""


@dataclass(eq=False)
class Node:
    node_id: str
    kind: str  # "chunk" | "response"
    text: str
    init_embedding: np.ndarray = field(repr=False)
    round: int = 0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Node):
            return NotImplemented
        return (
            self.node_id == other.node_id
            and self.kind == other.kind
            and self.text == other.text
            and self.round == other.round
            and np.array_equal(self.init_embedding, other.init_embedding)
        )


@dataclass(eq=False)
class GraphOfRecords:
    doc_id: str
    nodes: list[Node]
    edges: list[tuple[str, str]]
    training_pairs: list[tuple[str, str]]  # (query, label chunk id)
    config_hash: str | None = None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GraphOfRecords):
            return NotImplemented
        return (
            self.doc_id == other.doc_id
            and self.nodes == other.nodes
            and self.edges == other.edges
            and self.training_pairs == other.training_pairs
        )

    def index(self) -> dict[str, int]:
        return {n.node_id: i for i, n in enumerate(self.nodes)}

    def node(self, node_id: str) -> Node:
        return self.nodes[self.index()[node_id]]

    def embedding_matrix(self) -> np.ndarray:
        return np.stack([n.init_embedding for n in self.nodes])


_SPLIT = 134217729.0  # 2**27 + 1


def _two_product(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Error-free products: ``p + err == a * b`` exactly (Dekker)."""
    p = a * b
    c = _SPLIT * a
    ahi = c - (c - a)
    alo = a - ahi
    c = _SPLIT * b
    bhi = c - (c - b)
    blo = b - bhi
    err = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    return p, err


def _exact_terms(query_emb: np.ndarray, embeddings: np.ndarray) -> np.ndarray:
    p, err = _two_product(np.asarray(embeddings, dtype=np.float64), np.asarray(query_emb, dtype=np.float64))
    return np.concatenate([p, err], axis=1)


def dot_scores(query_emb: np.ndarray, embeddings: np.ndarray) -> np.ndarray:
    """Dot products rounded once from their exact values.

    The result does not depend on summation order or BLAS, so equal inputs
    always give equal scores.
    """
    terms = _exact_terms(query_emb, embeddings)
    return np.array([math.fsum(row) for row in terms], dtype=np.float64)


def rank_by_dot(query_emb: np.ndarray, embeddings: np.ndarray) -> np.ndarray:
    """Indices by descending exact dot product, exact ties by ascending index."""
    terms = _exact_terms(query_emb, embeddings)
    scores = np.array([math.fsum(row) for row in terms], dtype=np.float64)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    # rounding is monotone, so only equal rounded scores can hide an exact order
    lo = 0
    while lo < len(order):
        hi = lo + 1
        while hi < len(order) and s[hi] == s[lo]:
            hi += 1
        if hi - lo > 1:
            def cmp(i, j):
                d = math.fsum(np.concatenate([terms[j], -terms[i]]))
                return (d > 0) - (d < 0)

            order[lo:hi] = sorted(order[lo:hi].tolist(), key=functools.cmp_to_key(cmp))
        lo = hi
    return order


def retrieve_corpus(
    query: str | np.ndarray, candidates: list[Node], k: int, emb: EmbeddingProvider | None = None
) -> list[str]:
    """Top-``k`` candidate ids by dot product with the query embedding."""
    if not candidates:
        raise ValueError("no retrieval candidates")
    if k < 1:
        raise ValueError("k must be >= 1")
    q = emb.embed_query(query) if isinstance(query, str) else np.asarray(query)
    order = rank_by_dot(q, np.stack([c.init_embedding for c in candidates]))
    return [candidates[i].node_id for i in order[:k]]


def build_graph(
    chunks: list[Chunk],
    llm: LlmClient,
    emb: EmbeddingProvider,
    n_queries: int = 30,
    k: int = 6,
    seed: int = 0,
    sim_temperature: float = 0.5,
    gen_temperature: float = 0.0,
) -> GraphOfRecords:
    if not chunks:
        raise ValueError("build_graph needs at least one chunk")
    if n_queries < 1:
        raise ValueError("n_queries must be >= 1")
    doc_id = chunks[0].doc_id
    rng = np.random.default_rng(seed)
    nodes = [Node(c.chunk_id, "chunk", c.text, emb.embed_context(c.text), 0) for c in chunks]
    edges: list[tuple[str, str]] = []
    pairs: list[tuple[str, str]] = []
    seen: set[str] = set()
    samples_per_chunk = [0] * len(chunks)

    for i in range(1, n_queries + 1):
        try:
            for _ in range(MAX_QUERY_ATTEMPTS):
                c = int(rng.integers(len(chunks)))
                query = llm.simulate_query(chunks[c], sim_temperature, salt=samples_per_chunk[c])
                samples_per_chunk[c] += 1
                if query.casefold() not in seen:
                    break
            else:
                raise GraphBuildError(
                    f"document {doc_id!r}: no new query after {MAX_QUERY_ATTEMPTS} attempts "
                    f"in round {i}",
                    i,
                )
            seen.add(query.casefold())
            retrieved = retrieve_corpus(query, nodes, k, emb)
            by_id = {n.node_id: n for n in nodes}
            response = llm.llm_generate(
                rag_prompt([by_id[r].text for r in retrieved], query), gen_temperature
            )
            node = Node(f"{doc_id}#r{i}", "response", response, emb.embed_context(response), i)
        except GraphBuildError:
            raise
        except Exception as exc:
            raise GraphBuildError(f"document {doc_id!r}, round {i}: {exc}", i) from exc
        nodes.append(node)
        edges.extend((r, node.node_id) for r in retrieved)
        pairs.append((query, chunks[c].chunk_id))

    touched = {u for e in edges for u in e}
    edges.extend((n.node_id, n.node_id) for n in nodes if n.node_id not in touched)
    return GraphOfRecords(doc_id, nodes, edges, pairs)


def graph_to_dict(g: GraphOfRecords) -> dict:
    out = {
        "version": GRAPH_VERSION,
        "doc_id": g.doc_id,
        "nodes": [
            {
                "id": n.node_id,
                "kind": n.kind,
                "text": n.text,
                "round": n.round,
                "embedding": n.init_embedding.tolist(),
            }
            for n in g.nodes
        ],
        "edges": [list(e) for e in g.edges],
        "training_pairs": [list(p) for p in g.training_pairs],
    }
    if g.config_hash is not None:
        out["config_hash"] = g.config_hash
    return out


def graph_from_dict(d: dict) -> GraphOfRecords:
    if d.get("version") != GRAPH_VERSION:
        raise GraphFormatError(
            f"unsupported graph version {d.get('version')!r} (expected {GRAPH_VERSION})"
        )
    try:
        nodes = [
            Node(n["id"], n["kind"], n["text"], np.asarray(n["embedding"], dtype=np.float64), n["round"])
            for n in d["nodes"]
        ]
        edges = [(s, t) for s, t in d["edges"]]
        pairs = [(q, c) for q, c in d["training_pairs"]]
        return GraphOfRecords(d["doc_id"], nodes, edges, pairs, d.get("config_hash"))
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphFormatError(f"malformed graph record: {exc}") from exc


def _decode(raw: bytes, what: str) -> dict:
    text = raw.decode("utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise GraphFormatError(f"cannot parse {what} at byte offset {offset}: {exc.msg}") from exc


def save_graph(g: GraphOfRecords, path: str | Path) -> None:
    Path(path).write_text(json.dumps(graph_to_dict(g), ensure_ascii=False), encoding="utf-8")


def load_graph(path: str | Path) -> GraphOfRecords:
    return graph_from_dict(_decode(Path(path).read_bytes(), str(path)))
