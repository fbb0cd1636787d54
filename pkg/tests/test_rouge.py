import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from recordgraph.corpus import Document
from recordgraph.rouge import EvaluationError, evaluate, lcs_length, rouge_l, rouge_n, rouge_tokens

# three pairs with hand-counted scores: R-L/R-1 F1 = 0.5, 0.6, 0.7 and R-2 F1 = 1/3, 1/2, 2/3
HAND = [
    ("a b c d", "a b x y"),
    ("a b c d e", "a b c x y"),
    ("a b c d e f g h i j", "a b c d e f g x y z"),
]


def test_tokens():
    assert rouge_tokens("The CAT, sat-on it's mat!") == ["the", "cat", "sat", "on", "it", "s", "mat"]


def test_identical_and_disjoint():
    for fn in (lambda c, r: rouge_n(c, r, 1), lambda c, r: rouge_n(c, r, 2), rouge_l):
        s = fn("alpha beta gamma", "alpha beta gamma")
        assert (s.precision, s.recall, s.f1) == (1.0, 1.0, 1.0)
        assert fn("alpha beta", "gamma delta").f1 == 0.0


def test_hand_examples():
    r1 = rouge_n("a c d", "a b c d", 1)
    assert (r1.recall, r1.precision) == (0.75, 1.0)
    assert abs(r1.f1 - 6 / 7) < 1e-9
    rl = rouge_l("a c d", "a b c d")
    assert (rl.recall, rl.precision) == (0.75, 1.0)
    assert abs(rl.f1 - 6 / 7) < 1e-9
    assert rouge_l("b a", "a b").f1 == 0.5


def test_clipped_counts():
    s = rouge_n("the the the the", "the cat", 1)
    assert s.precision == 0.25 and s.recall == 0.5


def test_degenerate_flag():
    assert rouge_n("a b", "a", 2).degenerate
    assert rouge_n("a b", "a", 2).f1 == 0.0
    assert rouge_l("", "a b").degenerate
    assert not rouge_l("a", "a").degenerate
    with pytest.raises(ValueError):
        rouge_n("a", "a", 3)


def _lcs_brute(a, b):
    for r in range(min(len(a), len(b)), 0, -1):
        subs = set(itertools.combinations(b, r))
        if any(c in subs for c in itertools.combinations(a, r)):
            return r
    return 0


_seq = st.lists(st.sampled_from("abcd"), max_size=12)


@given(_seq, _seq)
def test_lcs_oracle(a, b):
    assert lcs_length(a, b) == _lcs_brute(tuple(a), tuple(b))


@given(_seq, _seq)
def test_bounds(a, b):
    for s in (rouge_n(" ".join(a), " ".join(b), 1), rouge_n(" ".join(a), " ".join(b), 2), rouge_l(" ".join(a), " ".join(b))):
        assert 0.0 <= s.f1 <= max(s.precision, s.recall) + 1e-12
        assert max(s.precision, s.recall) <= 1.0


def test_evaluate_hand_scores():
    docs = [Document(f"d{i}", "text", (ref,)) for i, (ref, _) in enumerate(HAND)]
    preds = [(f"d{i}", cand) for i, (_, cand) in enumerate(HAND)]
    report = evaluate(preds, docs)
    assert report["n_docs"] == 3
    assert report["rouge_l"] == 60.0
    assert report["rouge_1"] == 60.0
    assert report["rouge_2"] == 50.0
    assert [round(r["rouge_l"], 12) for r in report["per_doc"]] == [0.5, 0.6, 0.7]


def test_evaluate_max_over_references():
    docs = [Document("d", "t", ("unrelated words here", "exact match text"))]
    report = evaluate([("d", "exact match text")], docs)
    assert report["rouge_l"] == report["rouge_1"] == report["rouge_2"] == 100.0
    single = evaluate([("d", "a c d")], [Document("d", "t", ("a b c d",))])
    assert single["rouge_1"] == round(100 * 6 / 7, 1)
    dup = evaluate([("d", "a c d")], [Document("d", "t", ("a b c d", "a b c d"))])
    assert dup == single


def test_evaluate_errors():
    with pytest.raises(EvaluationError, match="'missing'"):
        evaluate([("missing", "x")], [Document("d", "t", ("r",))])
    with pytest.raises(EvaluationError):
        evaluate([], [])
