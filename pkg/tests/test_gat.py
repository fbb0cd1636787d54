import numpy as np
import pytest

from recordgraph.nn import (
    GatConfig,
    GatModel,
    NonFiniteError,
    StaleCacheError,
    backward,
    edge_index,
    gat_forward,
)
from recordgraph.nn.gradcheck import grad_check, make_problem
from recordgraph.nn.optim import AdamState, adam_step


def _small(seed=0, n=6, dim=8, heads=2, dropout=0.0):
    rng = np.random.default_rng(seed)
    cfg = GatConfig(in_dim=dim, hidden_per_head=dim // heads, heads=heads, out_dim=dim, dropout=dropout)
    model = GatModel.init(cfg, seed)
    for k in ("l0.bias", "l1.bias"):
        model.params[k] = rng.normal(scale=0.1, size=model.params[k].shape)
    pairs = [(int(u), int(v)) for u, v in rng.integers(n, size=(n, 2)) if u != v]
    ei = edge_index(n, pairs)
    x = rng.normal(size=(n, dim))
    return model, x, ei, pairs


def _reference_forward(model, x, n, pairs, slope=0.2):
    """Per-node, per-head loops with no shared code path."""
    nbrs = {v: {v} for v in range(n)}
    for u, v in pairs:
        nbrs[v].add(u)
        nbrs[u].add(v)
    h = x
    for layer in (0, 1):
        p = {k[3:]: v for k, v in model.params.items() if k.startswith(f"l{layer}.")}
        heads = []
        for hd in range(p["W"].shape[0]):
            z = h @ p["W"][hd]
            out = np.zeros((n, z.shape[1]))
            for v in range(n):
                src = sorted(nbrs[v])
                e = [float(p["a_src"][hd] @ z[u] + p["a_dst"][hd] @ z[v]) for u in src]
                e = [x_ if x_ > 0 else slope * x_ for x_ in e]
                w = [np.exp(x_ - max(e)) for x_ in e]
                total = sum(w)
                for u, wu in zip(src, w):
                    out[v] += (wu / total) * z[u]
            heads.append(out)
        if layer == 0:
            pre = np.concatenate(heads, axis=1) + p["bias"]
            h = np.where(pre > 0, pre, np.exp(np.minimum(pre, 0)) - 1)
        else:
            h = sum(heads) / len(heads) + p["bias"]
    return h


def test_single_node_identity():
    cfg = GatConfig(in_dim=5, hidden_per_head=5, heads=1, out_dim=5)
    model = GatModel.init(cfg, 0)
    model.params["l0.W"] = np.eye(5)[None]
    model.params["l1.W"] = np.eye(5)[None]
    x = np.array([[0.0, 1.0, 2.5, 0.3, 7.0]])
    out, _ = gat_forward(model, x, edge_index(1, []))
    np.testing.assert_array_equal(out, x)


def test_attention_sums_to_one():
    model, x, ei, _ = _small(3, n=10)
    _, cache = gat_forward(model, x, ei)
    for lc in cache.layers:
        sums = np.add.reduceat(lc["alpha"], ei.indptr[:-1], axis=0)
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_forward_matches_straight_line_oracle(seed):
    model, x, ei, pairs = _small(seed)
    out, _ = gat_forward(model, x, ei)
    np.testing.assert_allclose(out, _reference_forward(model, x, 6, pairs), rtol=0, atol=1e-12)


def test_forward_deterministic():
    model, x, ei, _ = _small(1, dropout=0.3)
    a, _ = gat_forward(model, x, ei, training=True, rng=np.random.default_rng(9))
    b, _ = gat_forward(model, x, ei, training=True, rng=np.random.default_rng(9))
    assert a.tobytes() == b.tobytes()
    # eval mode ignores dropout
    c, _ = gat_forward(model, x, ei)
    d, _ = gat_forward(model, x, ei, training=False, rng=np.random.default_rng(1))
    assert c.tobytes() == d.tobytes()


def test_width_mismatch_names_layer():
    model, x, ei, _ = _small()
    with pytest.raises(ValueError, match="layer l0"):
        gat_forward(model, x[:, :5], ei)


def test_non_finite_names_node():
    model, x, ei, _ = _small()
    x[4, 0] = np.nan
    with pytest.raises(NonFiniteError, match="node d#4"):
        gat_forward(model, x, ei, node_ids=[f"d#{i}" for i in range(6)])


def test_zero_upstream_gives_zero_grads():
    model, x, ei, _ = _small()
    out, cache = gat_forward(model, x, ei)
    grads = backward(model, cache, np.zeros_like(out))
    assert all(not g.any() for g in grads.values())


def test_backward_is_linear_in_upstream():
    model, x, ei, _ = _small(dropout=0.2)
    out, cache = gat_forward(model, x, ei, training=True, rng=np.random.default_rng(0))
    up = np.random.default_rng(1).normal(size=out.shape)
    g1 = backward(model, cache, up)
    g2 = backward(model, cache, 2 * up)
    for k in g1:
        np.testing.assert_allclose(g2[k], 2 * g1[k], rtol=0, atol=1e-12)


@pytest.mark.parametrize("dropout", [0.0, 0.3])
def test_parameter_and_input_grads_finite_differences(dropout):
    model, x, ei, _ = _small(7, dropout=dropout)
    rng = np.random.default_rng(2)
    masks = None
    if dropout:
        masks = {
            "l0.x": (rng.random(x.shape) > dropout) / (1 - dropout),
            "l0.att": (rng.random((ei.n_edges, 2)) > dropout) / (1 - dropout),
            "l1.x": (rng.random(x.shape) > dropout) / (1 - dropout),
            "l1.att": (rng.random((ei.n_edges, 2)) > dropout) / (1 - dropout),
        }
    up = rng.normal(size=(6, 8))

    def f():
        out, _ = gat_forward(model, x, ei, training=masks is not None, masks=masks)
        return float((out * up).sum())

    out, cache = gat_forward(model, x, ei, training=masks is not None, masks=masks)
    grads, dx = backward(model, cache, up, return_input_grad=True)
    h = 1e-5
    for name, p in list(model.params.items()) + [("x", x)]:
        analytic = dx if name == "x" else grads[name]
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up_v = f()
            flat[i] = orig - h
            dn_v = f()
            flat[i] = orig
            num = (up_v - dn_v) / (2 * h)
            assert abs(num - analytic.reshape(-1)[i]) <= 1e-6 * max(1.0, abs(num)), (name, i)


def test_stale_cache_rejected():
    model, x, ei, _ = _small()
    out, cache = gat_forward(model, x, ei)
    grads = backward(model, cache, np.ones_like(out))
    adam_step(model, grads, AdamState.for_model(model), 1e-3)
    with pytest.raises(StaleCacheError):
        backward(model, cache, np.ones_like(out))


@pytest.mark.parametrize("seed", [42, 3])
@pytest.mark.parametrize("tau", [0.07, 1.0])
@pytest.mark.parametrize("dropout", [0.0, 0.25])
def test_grad_check_small(seed, tau, dropout):
    assert grad_check(seed, tau=tau, dropout=dropout) < 1e-4


def test_grad_check_configured_width():
    # every tensor at the production width (768 in, 4 x 192 hidden), sampled entries
    err = grad_check(5, tau=0.07, n_nodes=8, dim=768, heads=4, max_entries=6)
    assert err < 1e-4


def test_make_problem_shapes():
    model, x, ei, offsets, queries, masks = make_problem(0, dropout=0.5)
    assert x.shape == (12, 8)
    assert list(offsets) == [0, 6, 12]
    assert len(queries) == 6
    assert set(masks) == {"l0.x", "l0.att", "l1.x", "l1.att"}
    assert model.config.hidden_dim == 8
