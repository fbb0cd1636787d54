import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recordgraph.checkpoint import TrainConfig
from recordgraph.corpus import tokenize
from recordgraph.objective import LossConfig
from recordgraph.providers import EmbeddingProvider, LlmClient, TokenEmbedder
from recordgraph.records import GraphOfRecords, Node, build_graph
from recordgraph.simscore import (
    ScoringError,
    bertscore,
    bertscore_f1,
    load_rankings,
    precompute_rankings,
    rank_against,
    rank_nodes,
    save_rankings,
)
from recordgraph.trainer import train

from conftest import make_chunks


class TableEmbedder:
    """Token embeddings from a lookup table, rows normalized."""

    def __init__(self, table):
        self.table = {k: np.asarray(v, float) / np.linalg.norm(v) for k, v in table.items()}

    def embed_tokens(self, text):
        toks = tokenize(text).tokens
        return np.array([self.table[t] for t in toks]).reshape(len(toks), -1)


def _brute_f1(cand, ref, embed):
    c, r = embed(cand), embed(ref)
    recall = sum(max(float(np.dot(rt, ct)) for ct in c) for rt in r) / len(r)
    precision = sum(max(float(np.dot(ct, rt)) for rt in r) for ct in c) / len(c)
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


def test_hand_computed_greedy_match():
    e = TableEmbedder({"x": [1, 0], "y": [0, 1]})
    p, r, f1 = bertscore("x", "x y", e)
    assert (p, r) == (1.0, 0.5)
    assert f1 == pytest.approx(2 / 3, abs=1e-15)


def test_orthogonal_tokens_score_zero():
    e = TableEmbedder({"x": [1, 0, 0], "y": [0, 1, 0], "z": [0, 0, 1]})
    assert bertscore_f1("x", "y z", e) == 0.0


def test_identical_strings_score_one(tok):
    assert bertscore_f1("the cat sat on the mat", "the cat sat on the mat", tok) == pytest.approx(1.0, abs=1e-12)


def test_empty_text_errors(tok):
    with pytest.raises(ScoringError):
        bertscore_f1("", "x", tok)


_words = st.lists(st.sampled_from([f"w{i}" for i in range(15)]), min_size=1, max_size=12).map(" ".join)


@settings(max_examples=100)
@given(_words, _words)
def test_symmetry_and_oracle(a, b):
    tok = TokenEmbedder(64)
    assert abs(bertscore_f1(a, b, tok) - bertscore_f1(b, a, tok)) <= 1e-12
    # dyadic token entries make every dot product exact, so the match is bitwise
    assert bertscore_f1(a, b, tok) == _brute_f1(a, b, tok.embed_tokens)


def _toy_graph(texts):
    nodes = [Node(f"n{i}", "chunk" if i < 3 else "response", t, np.zeros(4), 0 if i < 3 else i - 2) for i, t in enumerate(texts)]
    return GraphOfRecords("toy", nodes, [], [("q?", "n1")])


def test_eight_node_ordering_matches_hand_oracle():
    rng = np.random.default_rng(3)
    vocab = list("abcdefgh")
    e = TableEmbedder({t: rng.normal(size=5) for t in vocab})
    texts = [" ".join(rng.choice(vocab, size=rng.integers(1, 6))) for _ in range(8)]
    texts[6] = texts[2]  # a duplicate to exercise the tie rule
    g = _toy_graph(texts)
    rl = rank_nodes(g, 0, e)
    oracle = sorted(range(8), key=lambda i: (-_brute_f1(texts[i], texts[1], e.embed_tokens), i))
    assert rl.ordered_nodes == [f"n{i}" for i in oracle]
    assert rl.positive == "n1"
    assert rl.scores[0] == pytest.approx(1.0)
    pos = rl.ordered_nodes.index("n2")
    assert rl.ordered_nodes[pos + 1] == "n6"
    assert all(a >= b for a, b in zip(rl.scores, rl.scores[1:]))
    np.testing.assert_allclose(rl.scores, [_brute_f1(texts[i], texts[1], e.embed_tokens) for i in oracle], atol=1e-12)


def test_bad_node_is_named():
    g = _toy_graph(["a", "b", "..."])
    g.nodes[2].text = ""
    with pytest.raises(ScoringError, match="n2"):
        rank_against(g, "a", TokenEmbedder(32))


def _small_graph(n_queries=3, seed=0):
    rng = np.random.default_rng(seed)
    texts = [" ".join(rng.choice([f"v{i}" for i in range(80)], size=30)) for _ in range(3)]
    return build_graph(make_chunks("d", texts), LlmClient(), EmbeddingProvider(32), n_queries=n_queries, k=3, seed=seed)


def test_precompute_lists(tmp_path):
    g = _small_graph()
    tok = TokenEmbedder(32)
    lists = precompute_rankings(g, tok)
    assert len(lists) == 3
    ids = sorted(n.node_id for n in g.nodes)
    for i, rl in enumerate(lists):
        assert rl.pair_index == i
        assert sorted(rl.ordered_nodes) == ids
    again = precompute_rankings(g, tok)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_rankings("d", lists, p1, "h")
    save_rankings("d", again, p2, "h")
    assert p1.read_bytes() == p2.read_bytes()
    doc_id, loaded, h = load_rankings(p1)
    assert (doc_id, h) == ("d", "h")
    assert loaded == lists


def test_training_from_file_matches_fresh(tmp_path):
    graphs = [_small_graph(seed=s) for s in range(2)]
    tok = TokenEmbedder(32)
    fresh = [precompute_rankings(g, tok) for g in graphs]
    for i, rl in enumerate(fresh):
        save_rankings(graphs[i].doc_id, rl, tmp_path / f"{i}.json")
    warm = [load_rankings(tmp_path / f"{i}.json")[1] for i in range(2)]
    cfg = TrainConfig(batch_size=2, epochs=3, hidden_dim=8, heads=2, dropout=0.1, seed=1, loss=LossConfig(alpha=0.5))
    emb = EmbeddingProvider(32)
    a = train(graphs, fresh, cfg, emb)
    b = train(graphs, warm, cfg, emb)
    assert a.trace == b.trace
