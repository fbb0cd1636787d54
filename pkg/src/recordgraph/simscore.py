"""BERTScore node rankings used as training supervision."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from recordgraph.providers import TokenEmbedder
from recordgraph.records import GraphFormatError, GraphOfRecords, _decode

RANKINGS_VERSION = 1


class ScoringError(ValueError):
    """A text could not be scored (no tokens)."""


@dataclass
class RankingList:
    pair_index: int
    ordered_nodes: list[str]
    scores: list[float]
    query: str = ""
    label: str = ""

    @property
    def positive(self) -> str:
        return self.ordered_nodes[0]


def greedy_match(cand: np.ndarray, ref: np.ndarray) -> tuple[float, float, float]:
    """Precision, recall and F1 of greedy cosine matching between token rows."""
    if len(cand) == 0 or len(ref) == 0:
        raise ScoringError("both texts need at least one token")
    sim = ref @ cand.T
    recall = float(sim.max(axis=1).mean())
    precision = float(sim.max(axis=0).mean())
    denom = precision + recall
    f1 = 2 * precision * recall / denom if denom != 0 else 0.0
    return precision, recall, f1


def bertscore(candidate: str, reference: str, embedder: TokenEmbedder) -> tuple[float, float, float]:
    """(P, R, F1) without IDF weighting or baseline rescaling."""
    return greedy_match(embedder.embed_tokens(candidate), embedder.embed_tokens(reference))


def bertscore_f1(candidate: str, reference: str, embedder: TokenEmbedder) -> float:
    return bertscore(candidate, reference, embedder)[2]


_COMPONENT = {"precision": 0, "recall": 1, "f1": 2}


def rank_against(
    g: GraphOfRecords,
    label: str,
    embedder: TokenEmbedder,
    pair_index: int = 0,
    query: str = "",
    component: str = "f1",
) -> RankingList:
    """Order every node of ``g`` by BERTScore against ``label``, ties by node index."""
    ref = embedder.embed_tokens(label)
    slot = _COMPONENT[component]
    scores = np.empty(len(g.nodes))
    for i, node in enumerate(g.nodes):
        try:
            scores[i] = greedy_match(embedder.embed_tokens(node.text), ref)[slot]
        except ScoringError as exc:
            raise ScoringError(f"node {node.node_id!r}: {exc}") from exc
    order = np.argsort(-scores, kind="stable")
    return RankingList(
        pair_index,
        [g.nodes[i].node_id for i in order],
        [float(scores[i]) for i in order],
        query,
        label,
    )


def rank_nodes(g: GraphOfRecords, pair_index: int, embedder: TokenEmbedder, component: str = "f1") -> RankingList:
    if not 0 <= pair_index < len(g.training_pairs):
        raise IndexError(f"pair_index {pair_index} out of range for {len(g.training_pairs)} pairs")
    query, label_id = g.training_pairs[pair_index]
    return rank_against(g, g.node(label_id).text, embedder, pair_index, query, component)


def precompute_rankings(g: GraphOfRecords, embedder: TokenEmbedder, component: str = "f1") -> list[RankingList]:
    return [rank_nodes(g, i, embedder, component) for i in range(len(g.training_pairs))]


def save_rankings(doc_id: str, rankings: list[RankingList], path: str | Path, config_hash: str | None = None) -> None:
    rec = {
        "version": RANKINGS_VERSION,
        "doc_id": doc_id,
        "rankings": [
            {
                "pair_index": r.pair_index,
                "query": r.query,
                "label": r.label,
                "ordered_nodes": r.ordered_nodes,
                "scores": r.scores,
            }
            for r in rankings
        ],
    }
    if config_hash is not None:
        rec["config_hash"] = config_hash
    Path(path).write_text(json.dumps(rec, ensure_ascii=False), encoding="utf-8")


def load_rankings(path: str | Path) -> tuple[str, list[RankingList], str | None]:
    d = _decode(Path(path).read_bytes(), str(path))
    if d.get("version") != RANKINGS_VERSION:
        raise GraphFormatError(f"unsupported rankings version {d.get('version')!r}")
    try:
        lists = [
            RankingList(r["pair_index"], r["ordered_nodes"], r["scores"], r.get("query", ""), r.get("label", ""))
            for r in d["rankings"]
        ]
        return d["doc_id"], lists, d.get("config_hash")
    except (KeyError, TypeError) as exc:
        raise GraphFormatError(f"malformed rankings file {path}: {exc}") from exc
