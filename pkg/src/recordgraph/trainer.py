"""Graph-level mini-batch training of the GAT node encoder."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from recordgraph.checkpoint import Checkpoint, TrainConfig, save_checkpoint
from recordgraph.corpus import Document
from recordgraph.nn.gat import EdgeIndex, GatConfig, GatModel, backward, batch_edge_index, gat_forward, graph_edge_index
from recordgraph.nn.optim import AdamState, adam_step, lr_at
from recordgraph.objective import RankedQuery, total_loss
from recordgraph.providers import EmbeddingProvider, TokenEmbedder
from recordgraph.records import GraphOfRecords
from recordgraph.seeding import config_hash, derive_seed
from recordgraph.simscore import RankingList, rank_against

log = logging.getLogger(__name__)

GLOBAL_QUERY = "Summarize the whole document."

# Per-dataset dropout and loss coefficient; the rest of the table is shared.
DATASET_PRESETS = {
    "qmsum": {"dropout": 0.2, "alpha": 0.9},
    "academiceval": {"dropout": 0.0, "alpha": 0.6},
    "wcep": {"dropout": 0.1, "alpha": 0.7},
    "booksum": {"dropout": 0.2, "alpha": 0.2},
}


class TrainingError(RuntimeError):
    pass


@dataclass
class GraphExamples:
    """Tensors and frozen query embeddings for one graph."""

    doc_id: str
    features: np.ndarray
    ei: EdgeIndex
    queries: list[np.ndarray]
    orders: list[np.ndarray]


def build_supervised_pairs(g: GraphOfRecords, doc: Document, n_copies: int, query: str = GLOBAL_QUERY) -> list[tuple[str, str]]:
    """``n_copies`` identical (global query, reference summary) pairs."""
    if not doc.reference_summaries:
        raise ValueError(f"document {doc.doc_id!r} has no reference summary")
    return [(query, doc.reference_summaries[0])] * n_copies


def supervised_rankings(g: GraphOfRecords, doc: Document, embedder: TokenEmbedder, n_copies: int | None = None) -> list[RankingList]:
    n_copies = n_copies if n_copies is not None else len(g.training_pairs)
    pairs = build_supervised_pairs(g, doc, n_copies)
    query, label = pairs[0]
    base = rank_against(g, label, embedder, 0, query)
    return [RankingList(i, list(base.ordered_nodes), list(base.scores), q, lab) for i, (q, lab) in enumerate(pairs)]


def prepare_examples(graphs: list[GraphOfRecords], rankings: list[list[RankingList]], emb: EmbeddingProvider) -> list[GraphExamples]:
    if len(graphs) != len(rankings):
        raise TrainingError(f"{len(graphs)} graphs but {len(rankings)} ranking sets")
    out = []
    for g, lists in zip(graphs, rankings):
        idx = g.index()
        if not lists:
            raise TrainingError(f"graph {g.doc_id!r} has no rankings")
        q_cache: dict[str, np.ndarray] = {}
        queries, orders = [], []
        for r in lists:
            if len(r.ordered_nodes) != len(g.nodes) or set(r.ordered_nodes) != set(idx):
                raise TrainingError(f"graph {g.doc_id!r}: ranking {r.pair_index} does not match its nodes")
            query = r.query
            if not query:
                if r.pair_index >= len(g.training_pairs):
                    raise TrainingError(f"graph {g.doc_id!r}: ranking {r.pair_index} has no training pair")
                query = g.training_pairs[r.pair_index][0]
            if query not in q_cache:
                q_cache[query] = emb.embed_query(query)
            queries.append(q_cache[query])
            orders.append(np.array([idx[n] for n in r.ordered_nodes], dtype=np.int64))
        out.append(GraphExamples(g.doc_id, g.embedding_matrix(), graph_edge_index(g), queries, orders))
    return out


def train_config_hash(config: TrainConfig, provenance: str | None = None) -> str:
    return config_hash({"train": config.to_dict(), "provenance": provenance})


def gat_config_for(config: TrainConfig, dim: int) -> GatConfig:
    return GatConfig(
        in_dim=dim,
        hidden_per_head=config.hidden_dim // config.heads,
        heads=config.heads,
        out_dim=dim,
        leaky_slope=config.leaky_slope,
        dropout=config.dropout,
    )


def _restore_rng(state: dict) -> np.random.Generator:
    rng = np.random.default_rng()
    rng.bit_generator.state = state
    return rng


def train(
    graphs: list[GraphOfRecords],
    rankings: list[list[RankingList]],
    config: TrainConfig,
    emb: EmbeddingProvider,
    *,
    resume: Checkpoint | None = None,
    stop_epoch: int | None = None,
    on_step: Callable[[dict], None] | None = None,
    checkpoint_dir: str | Path | None = None,
    checkpoint_every: int = 0,
    examples: list[GraphExamples] | None = None,
    provenance: str | None = None,
) -> Checkpoint:
    """Train for ``config.epochs`` epochs (or until ``stop_epoch``).

    Each step takes one batch of whole graphs, runs them through the GAT as
    a disjoint union, evaluates the combined loss over every training query
    in the batch with in-batch negatives, and applies one Adam update.
    """
    examples = examples if examples is not None else prepare_examples(graphs, rankings, emb)
    dim = examples[0].features.shape[1]
    chash = train_config_hash(config, provenance)
    if resume is not None:
        if resume.config_hash != chash:
            raise TrainingError("checkpoint was produced with a different training config")
        model, adam, start, trace = resume.model.copy(), resume.adam, resume.epoch, list(resume.trace)
        adam = AdamState({k: v.copy() for k, v in adam.m.items()}, {k: v.copy() for k, v in adam.v.items()},
                         adam.step, adam.beta1, adam.beta2, adam.eps)
        rng = _restore_rng(resume.rng_state)
    else:
        model = GatModel.init(gat_config_for(config, dim), derive_seed(config.seed, "init"))
        adam = AdamState.for_model(model)
        start, trace = 0, []
        rng = np.random.default_rng(derive_seed(config.seed, "train"))
    stop = config.epochs if stop_epoch is None else min(stop_epoch, config.epochs)

    n = len(examples)
    for epoch in range(start, stop):
        lr = lr_at(epoch, config.epochs, config.base_lr)
        perm = rng.permutation(n)
        for b, lo in enumerate(range(0, n, config.batch_size)):
            batch = [examples[i] for i in perm[lo : lo + config.batch_size]]
            ei, offsets = batch_edge_index([ex.ei for ex in batch])
            x = np.concatenate([ex.features for ex in batch])
            out, cache = gat_forward(model, x, ei, training=True, rng=rng)
            embs = [out[offsets[k] : offsets[k + 1]] for k in range(len(batch))]
            queries = [
                RankedQuery(k, q, order)
                for k, ex in enumerate(batch)
                for q, order in zip(ex.queries, ex.orders)
            ]
            report, g_embs = total_loss(queries, embs, config.loss, rng)
            if not np.isfinite(report.total):
                raise TrainingError(f"non-finite loss at epoch {epoch} batch {b}")
            grads = backward(model, cache, np.concatenate(g_embs))
            adam_step(model, grads, adam, lr)
            rec = {"epoch": epoch, "batch": b, "lr": lr, **asdict(report)}
            trace.append(rec)
            if on_step is not None:
                on_step(rec)
        if checkpoint_dir and checkpoint_every and (epoch + 1) % checkpoint_every == 0 and epoch + 1 < stop:
            save_checkpoint(
                Checkpoint(model, adam, epoch + 1, rng.bit_generator.state, config, chash, trace),
                Path(checkpoint_dir) / f"epoch{epoch + 1}.ckpt",
            )
    ckpt = Checkpoint(model, adam, stop, rng.bit_generator.state, config, chash, trace)
    if checkpoint_dir:
        save_checkpoint(ckpt, Path(checkpoint_dir) / f"epoch{stop}.ckpt")
    return ckpt


def epoch_means(trace: list[dict], key: str = "total") -> list[float]:
    by_epoch: dict[int, list[float]] = {}
    for rec in trace:
        by_epoch.setdefault(rec["epoch"], []).append(rec[key])
    return [float(np.mean(by_epoch[e])) for e in sorted(by_epoch)]


def write_trace(trace: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in trace:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
