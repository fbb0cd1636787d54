"""Pure-numpy versions of the hot kernels.

Each function mirrors one in ``_kernels.pyx`` with identical signatures and
semantics. Edge arrays are assumed sorted by destination node, with
``indptr`` delimiting each destination's incoming edges (CSR layout), and
every segment non-empty.
"""
from __future__ import annotations

import numpy as np


def segment_softmax(logits: np.ndarray, indptr: np.ndarray) -> np.ndarray:
    starts = indptr[:-1]
    counts = np.diff(indptr)
    seg_max = np.maximum.reduceat(logits, starts, axis=0)
    shifted = np.exp(logits - np.repeat(seg_max, counts, axis=0))
    seg_sum = np.add.reduceat(shifted, starts, axis=0)
    return shifted / np.repeat(seg_sum, counts, axis=0)


def segment_softmax_backward(alpha: np.ndarray, grad: np.ndarray, indptr: np.ndarray) -> np.ndarray:
    counts = np.diff(indptr)
    inner = np.add.reduceat(alpha * grad, indptr[:-1], axis=0)
    return alpha * (grad - np.repeat(inner, counts, axis=0))


def gather_aggregate(
    indptr: np.ndarray, src: np.ndarray, weights: np.ndarray, values: np.ndarray
) -> np.ndarray:
    # values: (heads, nodes, feat); weights: (edges, heads)
    messages = values[:, src, :] * weights.T[:, :, None]
    return np.add.reduceat(messages, indptr[:-1], axis=1)


def gather_aggregate_backward(
    indptr: np.ndarray,
    src: np.ndarray,
    weights: np.ndarray,
    values: np.ndarray,
    grad_out: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    n_nodes = values.shape[1]
    dst = np.repeat(np.arange(n_nodes), np.diff(indptr))
    grad_weights = np.einsum("hef,hef->eh", grad_out[:, dst, :], values[:, src, :])
    contrib = grad_out[:, dst, :] * weights.T[:, :, None]
    order = np.argsort(src, kind="stable")
    sorted_src = src[order]
    grad_values = np.zeros_like(values)
    present, starts = np.unique(sorted_src, return_index=True)
    grad_values[:, present, :] = np.add.reduceat(contrib[:, order, :], starts, axis=1)
    return grad_weights, grad_values


def lcs_length(a: np.ndarray, b: np.ndarray) -> int:
    if len(a) < len(b):
        a, b = b, a
    if len(b) == 0:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a.tolist():
        cur = [0]
        for j, y in enumerate(b.tolist()):
            if x == y:
                cur.append(prev[j] + 1)
            else:
                cur.append(max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]
