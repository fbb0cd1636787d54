"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--nodes 2000] [--repeat 5]

Times each hot kernel on a random graph, Rouge-L's LCS on long token
sequences, and one full GAT forward + backward pass at the production width.
"""
from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from recordgraph import kernels
from recordgraph.nn.gat import GatConfig, GatModel, backward, edge_index, gat_forward


def _graph(rng, n_nodes, degree):
    pairs = rng.integers(n_nodes, size=(n_nodes * degree, 2))
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    return edge_index(n_nodes, pairs.tolist())


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def run(n_nodes: int, degree: int, heads: int, width: int, lcs_len: int, repeat: int) -> dict:
    rng = np.random.default_rng(0)
    ei = _graph(rng, n_nodes, degree)
    logits = rng.normal(size=(ei.n_edges, heads))
    grad_e = rng.normal(size=(ei.n_edges, heads))
    values = rng.normal(size=(heads, n_nodes, width))
    grad_v = rng.normal(size=(heads, n_nodes, width))
    seq_a = rng.integers(0, 200, lcs_len)
    seq_b = rng.integers(0, 200, lcs_len)

    cfg = GatConfig()
    model = GatModel.init(cfg, 0)
    x = rng.normal(size=(ei.n_nodes, cfg.in_dim))
    up = rng.normal(size=(ei.n_nodes, cfg.out_dim))

    def step():
        out, cache = gat_forward(model, x, ei)
        backward(model, cache, up)

    results: dict[str, dict[str, float]] = {}
    saved = kernels._impl
    try:
        for name, impl in kernels.available_backends().items():
            alpha = impl.segment_softmax(logits, ei.indptr)
            row = {
                "segment_softmax": _best(lambda: impl.segment_softmax(logits, ei.indptr), repeat),
                "segment_softmax_backward": _best(
                    lambda: impl.segment_softmax_backward(alpha, grad_e, ei.indptr), repeat),
                "gather_aggregate": _best(
                    lambda: impl.gather_aggregate(ei.indptr, ei.src, alpha, values), repeat),
                "gather_aggregate_backward": _best(
                    lambda: impl.gather_aggregate_backward(ei.indptr, ei.src, alpha, values, grad_v), repeat),
                "lcs_length": _best(lambda: impl.lcs_length(seq_a, seq_b), max(1, repeat // 2)),
            }
            kernels._impl = impl
            row["gat_forward_backward"] = _best(step, repeat)
            results[name] = row
    finally:
        kernels._impl = saved
    return {
        "graph": {"nodes": ei.n_nodes, "edges": ei.n_edges, "heads": heads, "width": width},
        "lcs_tokens": lcs_len,
        "seconds": results,
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=2000)
    ap.add_argument("--degree", type=int, default=4)
    ap.add_argument("--heads", type=int, default=4)
    ap.add_argument("--width", type=int, default=192)
    ap.add_argument("--lcs-len", type=int, default=1500)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true", help="print raw JSON instead of a table")
    args = ap.parse_args()
    res = run(args.nodes, args.degree, args.heads, args.width, args.lcs_len, args.repeat)
    if args.json:
        print(json.dumps(res, indent=2))
        return
    secs = res["seconds"]
    names = list(secs)
    g = res["graph"]
    print(f"graph: {g['nodes']} nodes, {g['edges']} edges, {g['heads']} heads x {g['width']}; "
          f"LCS over {res['lcs_tokens']} tokens")
    print(f"{'kernel':28s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for kernel in secs[names[0]]:
        times = [secs[n][kernel] for n in names]
        line = f"{kernel:28s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times)
        if "cython" in secs:
            line += f"{secs['numpy'][kernel] / secs['cython'][kernel]:11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
