"""Document ingestion, tokenization and sliding-window chunking."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


class DatasetError(ValueError):
    """A dataset file is malformed."""


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    reference_summaries: tuple[str, ...] = ()


@dataclass(frozen=True)
class TokenSeq:
    tokens: list[str]
    offsets: list[tuple[int, int]]

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    doc_id: str
    token_span: tuple[int, int]
    text: str = field(repr=False)


def tokenize(text: str) -> TokenSeq:
    """Split ``text`` into word runs and single punctuation marks.

    Offsets are ``(start, end)`` character positions into ``text``, so
    ``text[start:end] == token`` for every token.
    """
    tokens, offsets = [], []
    for m in _TOKEN_RE.finditer(text):
        tokens.append(m.group())
        offsets.append(m.span())
    return TokenSeq(tokens, offsets)


def chunk_spans(n_tokens: int, chunk_size: int = 256, overlap: int = 32) -> list[tuple[int, int]]:
    """Half-open token windows of ``chunk_size`` advancing by ``chunk_size - overlap``."""
    if overlap < 0:
        raise ValueError(f"overlap must be >= 0, got {overlap}")
    if chunk_size <= overlap:
        raise ValueError(f"chunk_size ({chunk_size}) must exceed overlap ({overlap})")
    stride = chunk_size - overlap
    spans = []
    start = 0
    while True:
        end = min(start + chunk_size, n_tokens)
        spans.append((start, end))
        if end >= n_tokens:
            return spans
        start += stride


def split_chunks(doc: Document, chunk_size: int = 256, overlap: int = 32) -> list[Chunk]:
    """Cut a document into overlapping token windows.

    The last window is kept even when shorter than ``chunk_size``. Chunk
    text is the verbatim source slice from the first token's start to the
    last token's end.
    """
    seq = tokenize(doc.text)
    if not seq.tokens:
        raise ValueError(f"document {doc.doc_id!r} has no tokens")
    chunks = []
    for i, (lo, hi) in enumerate(chunk_spans(len(seq), chunk_size, overlap)):
        text = doc.text[seq.offsets[lo][0] : seq.offsets[hi - 1][1]]
        chunks.append(Chunk(f"{doc.doc_id}#c{i}", doc.doc_id, (lo, hi), text))
    return chunks


def load_documents(path: str | Path) -> list[Document]:
    """Read a JSON-lines dataset of ``{"doc_id", "text", "summaries"}`` records."""
    docs: list[Document] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise DatasetError(f"{path}:{lineno}: record must be an object")
            doc_id, text = rec.get("doc_id"), rec.get("text")
            if not isinstance(doc_id, str) or not doc_id:
                raise DatasetError(f"{path}:{lineno}: missing or invalid 'doc_id'")
            if not isinstance(text, str) or not text.split():
                raise DatasetError(f"{path}:{lineno}: missing or empty 'text'")
            summaries = rec.get("summaries", [])
            if not isinstance(summaries, list) or not all(isinstance(s, str) for s in summaries):
                raise DatasetError(f"{path}:{lineno}: 'summaries' must be a list of strings")
            if doc_id in seen:
                raise DatasetError(f"{path}:{lineno}: duplicate doc_id {doc_id!r}")
            seen.add(doc_id)
            docs.append(Document(doc_id, text, tuple(summaries)))
    return docs


def write_documents(docs: list[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            rec = {"doc_id": d.doc_id, "text": d.text, "summaries": list(d.reference_summaries)}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
