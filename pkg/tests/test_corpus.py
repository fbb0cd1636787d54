import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recordgraph.corpus import DatasetError, Document, chunk_spans, load_documents, split_chunks, tokenize


def test_tokenize_examples():
    assert tokenize("the cat sat").tokens == ["the", "cat", "sat"]
    assert tokenize("").tokens == []
    seq = tokenize("a  b")
    assert seq.tokens == ["a", "b"]
    assert seq.offsets == [(0, 1), (3, 4)]


def test_tokenize_splits_punctuation():
    assert tokenize("Hello, world!").tokens == ["Hello", ",", "world", "!"]


@given(st.text(max_size=200))
def test_token_offsets_reconstruct_source(text):
    seq = tokenize(text)
    prev_end = 0
    for tok, (lo, hi) in zip(seq.tokens, seq.offsets):
        assert text[lo:hi] == tok
        assert lo >= prev_end and hi > lo
        prev_end = hi


def _doc(n):
    return Document("d", " ".join(f"w{i}" for i in range(n)))


def test_split_examples():
    assert [c.token_span for c in split_chunks(_doc(100))] == [(0, 100)]
    assert [c.token_span for c in split_chunks(_doc(600), 256, 32)] == [(0, 256), (224, 480), (448, 600)]
    assert len(split_chunks(_doc(256), 256, 32)) == 1


def test_chunk_ids_and_text():
    chunks = split_chunks(Document("doc7", "alpha beta,  gamma delta"), 3, 1)
    assert [c.chunk_id for c in chunks] == ["doc7#c0", "doc7#c1"]
    assert chunks[0].text == "alpha beta,"
    assert chunks[1].text == ",  gamma delta"


def test_degenerate_stride_rejected():
    with pytest.raises(ValueError):
        split_chunks(_doc(10), 32, 32)
    with pytest.raises(ValueError):
        split_chunks(_doc(10), 8, 9)


def _brute_windows(n, size, overlap):
    stride = size - overlap
    out = []
    for start in range(0, max(n, 1), stride):
        out.append((start, min(start + size, n)))
        if start + size >= n:
            break
    return out


@settings(max_examples=300)
@given(st.integers(1, 2000), st.integers(1, 300), st.data())
def test_chunk_count_and_coverage(n, size, data):
    overlap = data.draw(st.integers(0, size - 1))
    spans = chunk_spans(n, size, overlap)
    stride = size - overlap
    assert spans == _brute_windows(n, size, overlap)
    assert len(spans) == math.ceil(max(n - overlap, 1) / stride)
    assert all(hi - lo == size for lo, hi in spans[:-1])
    rebuilt = list(range(spans[0][0], spans[0][1]))
    for (plo, phi), (lo, hi) in zip(spans, spans[1:]):
        assert phi - lo == overlap
        rebuilt += list(range(lo + overlap, hi))
    assert rebuilt == list(range(n))


def _write(tmp_path, lines):
    p = tmp_path / "data.jsonl"
    p.write_text("\n".join(lines) + "\n")
    return p


def test_load_documents(tmp_path):
    p = _write(tmp_path, [
        json.dumps({"doc_id": "a", "text": "one two", "summaries": ["s"]}),
        json.dumps({"doc_id": "b", "text": "three"}),
    ])
    docs = load_documents(p)
    assert [d.doc_id for d in docs] == ["a", "b"]
    assert docs[0].reference_summaries == ("s",)
    assert docs[1].reference_summaries == ()


def test_load_missing_text_names_line(tmp_path):
    p = _write(tmp_path, [json.dumps({"doc_id": "a", "text": "x"}), json.dumps({"doc_id": "b"})])
    with pytest.raises(DatasetError, match=":2:"):
        load_documents(p)


def test_load_duplicate_id(tmp_path):
    p = _write(tmp_path, [json.dumps({"doc_id": "dup", "text": "x"})] * 2)
    with pytest.raises(DatasetError, match="dup"):
        load_documents(p)


def test_load_blank_text_rejected(tmp_path):
    p = _write(tmp_path, [json.dumps({"doc_id": "a", "text": "   "})])
    with pytest.raises(DatasetError, match=":1:"):
        load_documents(p)
