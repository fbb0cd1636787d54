import json
from dataclasses import replace

import numpy as np
import pytest

from recordgraph.checkpoint import TrainConfig, load_checkpoint, model_hash, save_checkpoint
from recordgraph.corpus import Document
from recordgraph.fixtures import separable_documents, shipped_fixture_path
from recordgraph.corpus import load_documents
from recordgraph.nn.gat import GatModel, gat_forward
from recordgraph.objective import LossConfig, RankedQuery, contrastive_loss
from recordgraph.providers import EmbeddingProvider, LlmClient, TokenEmbedder
from recordgraph.records import build_graph
from recordgraph.seeding import derive_seed
from recordgraph.simscore import RankingList, precompute_rankings
from recordgraph.trainer import (
    TrainingError,
    build_supervised_pairs,
    epoch_means,
    gat_config_for,
    prepare_examples,
    supervised_rankings,
    train,
)

from conftest import make_chunks

DIM = 32


def _small_set(n_graphs=3, seed=0):
    rng = np.random.default_rng(seed)
    emb, llm, tok = EmbeddingProvider(DIM), LlmClient(), TokenEmbedder(DIM)
    graphs, rankings = [], []
    for d in range(n_graphs):
        texts = [" ".join(rng.choice([f"g{d}w{i}" for i in range(60)], size=25)) for _ in range(3)]
        g = build_graph(make_chunks(f"doc{d}", texts), llm, emb, n_queries=4, k=3, seed=d)
        graphs.append(g)
        rankings.append(precompute_rankings(g, tok))
    return graphs, rankings, emb


def _cfg(**kw):
    base = dict(batch_size=2, epochs=4, hidden_dim=8, heads=2, dropout=0.2, seed=3, loss=LossConfig(alpha=0.5))
    base.update(kw)
    return TrainConfig(**base)


def test_one_graph_alpha_zero_is_contrastive():
    graphs, rankings, emb = _small_set(1)
    cfg = _cfg(epochs=1, dropout=0.0, loss=LossConfig(alpha=0.0))
    ckpt = train(graphs, rankings, cfg, emb)
    (ex,) = prepare_examples(graphs, rankings, emb)
    model = GatModel.init(gat_config_for(cfg, DIM), derive_seed(cfg.seed, "init"))
    out, _ = gat_forward(model, ex.features, ex.ei)
    queries = [RankedQuery(0, q, o) for q, o in zip(ex.queries, ex.orders)]
    want, _ = contrastive_loss(queries, [out], cfg.loss)
    assert len(ckpt.trace) == 1
    assert ckpt.trace[0]["l_cl"] == want
    assert ckpt.trace[0]["total"] == want


def test_same_seed_same_trace():
    graphs, rankings, emb = _small_set()
    a = train(graphs, rankings, _cfg(), emb)
    b = train(graphs, rankings, _cfg(), emb)
    assert json.dumps(a.trace) == json.dumps(b.trace)
    assert model_hash(a.model) == model_hash(b.model)
    c = train(graphs, rankings, _cfg(seed=4), emb)
    assert c.trace != a.trace


def test_trace_shape():
    graphs, rankings, emb = _small_set()
    ckpt = train(graphs, rankings, _cfg(), emb)
    # 3 graphs with batch size 2 -> 2 steps per epoch
    assert [(r["epoch"], r["batch"]) for r in ckpt.trace] == [(e, b) for e in range(4) for b in range(2)]
    assert set(ckpt.trace[0]) == {"epoch", "batch", "lr", "l_cl", "l_rank", "total", "entropy"}
    assert [r["lr"] for r in ckpt.trace[::2]] == [1e-3 * (1 - e / 4) for e in range(4)]
    assert len(epoch_means(ckpt.trace)) == 4


def test_resume_matches_straight_run(tmp_path):
    graphs, rankings, emb = _small_set()
    cfg = _cfg(epochs=6)
    straight = train(graphs, rankings, cfg, emb)
    half = train(graphs, rankings, cfg, emb, stop_epoch=3)
    save_checkpoint(half, tmp_path / "half.ckpt")
    resumed = train(graphs, rankings, cfg, emb, resume=load_checkpoint(tmp_path / "half.ckpt"))
    for k in straight.model.params:
        assert straight.model.params[k].tobytes() == resumed.model.params[k].tobytes()
    assert resumed.trace == straight.trace


def test_resume_rejects_other_config():
    graphs, rankings, emb = _small_set()
    half = train(graphs, rankings, _cfg(epochs=4), emb, stop_epoch=2)
    with pytest.raises(TrainingError, match="different training config"):
        train(graphs, rankings, _cfg(epochs=4, base_lr=2e-3), emb, resume=half)


def test_periodic_checkpoints(tmp_path):
    graphs, rankings, emb = _small_set()
    train(graphs, rankings, _cfg(epochs=4), emb, checkpoint_dir=tmp_path, checkpoint_every=2)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["epoch2.ckpt", "epoch4.ckpt"]
    assert load_checkpoint(tmp_path / "epoch2.ckpt").epoch == 2


def test_ranking_mismatch_names_graph():
    graphs, rankings, emb = _small_set(2)
    bad = rankings[1][0]
    rankings[1][0] = RankingList(bad.pair_index, bad.ordered_nodes[:-1], bad.scores[:-1], bad.query)
    with pytest.raises(TrainingError, match="doc1"):
        train(graphs, rankings, _cfg(), emb)


def test_non_finite_loss_aborts(monkeypatch):
    import recordgraph.trainer as trainer_mod
    from recordgraph.objective import LossReport

    graphs, rankings, emb = _small_set(2)
    real = trainer_mod.total_loss

    def broken(*a, **kw):
        report, grads = real(*a, **kw)
        return LossReport(report.l_cl, report.l_rank, float("nan"), report.entropy), grads

    monkeypatch.setattr(trainer_mod, "total_loss", broken)
    with pytest.raises(TrainingError, match="epoch 0 batch 0"):
        train(graphs, rankings, _cfg(), emb)


def test_supervised_pairs():
    graphs, _, _ = _small_set(1)
    doc = Document("doc0", "x", ("the reference summary", "another"))
    pairs = build_supervised_pairs(graphs[0], doc, 30)
    assert len(pairs) == 30 and len(set(pairs)) == 1
    assert pairs[0][1] == "the reference summary"
    lists = supervised_rankings(graphs[0], doc, TokenEmbedder(DIM), 5)
    assert len(lists) == 5
    assert all(r.ordered_nodes == lists[0].ordered_nodes and r.scores == lists[0].scores for r in lists)
    with pytest.raises(ValueError, match="no reference summary"):
        build_supervised_pairs(graphs[0], Document("doc0", "x"), 3)


def test_shipped_fixture_matches_generator():
    assert load_documents(shipped_fixture_path()) == separable_documents()


def test_fixture_shape(built_fixture):
    _, docs, graphs, rankings = built_fixture
    assert len(graphs) == 8
    assert all(len(g.nodes) == 12 and len(g.training_pairs) == 10 for g in graphs)
    assert all(len(r) == 10 for r in rankings)
