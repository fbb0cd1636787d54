"""Synthetic separable dataset for offline end-to-end checks.

Every document draws from its own vocabulary of made-up words, so queries
simulated from one chunk share tokens only with that document.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from recordgraph.corpus import Document

_ONSETS = "b c d f g h j k l m n p r s t v w z".split()
_VOWELS = "a e i o u".split()

# Chunking used with the shipped fixture: 44-token documents, two chunks each.
FIXTURE_CHUNK_SIZE = 24
FIXTURE_OVERLAP = 4
FIXTURE_QUERIES = 10
FIXTURE_SEED = 7
# the dataset preset with dropout 0.0 and alpha 0.6
FIXTURE_PRESET = "academiceval"


def _words(rng: np.random.Generator, count: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < count:
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(3))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def separable_documents(n_docs: int = 8, n_tokens: int = 44, summary_tokens: int = 16, seed: int = 7) -> list[Document]:
    rng = np.random.default_rng(seed)
    taken: set[str] = set()
    docs = []
    for d in range(n_docs):
        vocab = _words(rng, n_tokens, taken)
        text = " ".join(vocab)
        picks = np.sort(rng.choice(n_tokens, size=summary_tokens, replace=False))
        summary = " ".join(vocab[i] for i in picks)
        docs.append(Document(f"doc{d:02d}", text, (summary,)))
    return docs


def shipped_fixture_path() -> Path:
    """The packaged copy of ``separable_documents()`` as JSON lines."""
    return Path(str(resources.files("recordgraph") / "data" / "fixture.jsonl"))
