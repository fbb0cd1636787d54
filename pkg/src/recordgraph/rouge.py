"""Rouge-1/2/L and dataset-level evaluation (max over references)."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from recordgraph import kernels
from recordgraph.corpus import Document

_WORD = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float
    degenerate: bool = False


def rouge_tokens(text: str) -> list[str]:
    return _WORD.findall(text.lower())


def _score(overlap: int, n_cand: int, n_ref: int) -> RougeScore:
    p = overlap / n_cand if n_cand else 0.0
    r = overlap / n_ref if n_ref else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return RougeScore(p, r, f)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int = 1) -> RougeScore:
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    ref, cand = rouge_tokens(reference), rouge_tokens(candidate)
    if len(ref) < n or len(cand) < n:
        return RougeScore(0.0, 0.0, 0.0, degenerate=True)
    rc, cc = _ngrams(ref, n), _ngrams(cand, n)
    overlap = sum((rc & cc).values())
    return _score(overlap, sum(cc.values()), sum(rc.values()))


def lcs_length(a: list[str], b: list[str]) -> int:
    vocab: dict[str, int] = {}
    ia = np.array([vocab.setdefault(t, len(vocab)) for t in a], dtype=np.int64)
    ib = np.array([vocab.setdefault(t, len(vocab)) for t in b], dtype=np.int64)
    return kernels.lcs_length(ia, ib)


def rouge_l(candidate: str, reference: str) -> RougeScore:
    """Whole-text LCS, F-measure with beta = 1."""
    ref, cand = rouge_tokens(reference), rouge_tokens(candidate)
    if not ref or not cand:
        return RougeScore(0.0, 0.0, 0.0, degenerate=True)
    return _score(lcs_length(cand, ref), len(cand), len(ref))


METRICS = {
    "rouge_l": rouge_l,
    "rouge_1": lambda c, r: rouge_n(c, r, 1),
    "rouge_2": lambda c, r: rouge_n(c, r, 2),
}


class EvaluationError(ValueError):
    pass


def evaluate(predictions: list[tuple[str, str]], docs: list[Document]) -> dict:
    """Mean over documents of the best F1 against any reference, in percent."""
    if not predictions:
        raise EvaluationError("no predictions to evaluate")
    refs = {d.doc_id: d.reference_summaries for d in docs}
    per_doc = []
    for doc_id, summary in predictions:
        if not refs.get(doc_id):
            raise EvaluationError(f"no reference summary for document {doc_id!r}")
        row = {"doc_id": doc_id}
        for name, fn in METRICS.items():
            row[name] = max(fn(summary, r).f1 for r in refs[doc_id])
        per_doc.append(row)
    report = {"n_docs": len(per_doc)}
    for name in METRICS:
        report[name] = round(100 * float(np.mean([r[name] for r in per_doc])), 1)
    report["per_doc"] = per_doc
    return report
