"""Kernel dispatch: compiled extension when available, numpy otherwise.

Set ``RECORDGRAPH_PURE_PYTHON=1`` to force the numpy fallback.
"""
from __future__ import annotations

import os

import numpy as np

from recordgraph import _kernels_py

BACKEND = "numpy"
_impl = _kernels_py

if not os.environ.get("RECORDGRAPH_PURE_PYTHON"):
    try:
        from recordgraph import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def available_backends() -> dict[str, object]:
    """Map backend name to module for every importable implementation."""
    backends: dict[str, object] = {"numpy": _kernels_py}
    try:
        from recordgraph import _kernels as compiled
    except ImportError:
        return backends
    backends["cython"] = compiled
    return backends


def _f64(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def _i64(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.int64)


def segment_softmax(logits, indptr):
    return _impl.segment_softmax(_f64(logits), _i64(indptr))


def segment_softmax_backward(alpha, grad, indptr):
    return _impl.segment_softmax_backward(_f64(alpha), _f64(grad), _i64(indptr))


def gather_aggregate(indptr, src, weights, values):
    return _impl.gather_aggregate(_i64(indptr), _i64(src), _f64(weights), _f64(values))


def gather_aggregate_backward(indptr, src, weights, values, grad_out):
    return _impl.gather_aggregate_backward(
        _i64(indptr), _i64(src), _f64(weights), _f64(values), _f64(grad_out)
    )


def lcs_length(a, b) -> int:
    return int(_impl.lcs_length(_i64(a), _i64(b)))
