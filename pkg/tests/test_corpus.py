import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vqt.corpus import OOV, build_vocab, ingest_corpus, tokenize, toy_corpus_path


def test_small_file(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("a b a", encoding="utf-8")
    c = ingest_corpus(p, 100)
    assert c.vocab == ("a", "b", OOV)
    assert c.tokens.tolist() == [0, 1, 0]


def test_lowercase_and_punctuation():
    assert tokenize("The cat's Hat. Yes!") == ["the", "cat's", "hat", ".", "yes", "!"]


def test_vocab_order_frequency_then_alphabetical():
    assert build_vocab(["b", "c", "a", "c", "b"], 3) == ("b", "c", OOV)


def test_oov_mapping(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("x y z x y x w", encoding="utf-8")
    c = ingest_corpus(p, 3)
    assert c.vocab == ("x", "y", OOV)
    assert c.decode(c.tokens) == ["x", "y", OOV, "x", "y", "x", OOV]


def test_empty_file_rejected(tmp_path):
    p = tmp_path / "empty.txt"
    p.write_text("  \n", encoding="utf-8")
    with pytest.raises(ValueError, match="no tokens"):
        ingest_corpus(p, 10)


@given(st.lists(st.sampled_from(["ab", "cd", "ef", "gh", "ij", ".", ","]), min_size=1, max_size=60),
       st.integers(2, 8))
def test_vocab_bounded_and_deterministic(tmp_path_factory, words, V):
    vocab = build_vocab(words, V)
    assert len(vocab) <= V and vocab[-1] == OOV
    assert build_vocab(list(reversed(words)), V) == vocab
    p = tmp_path_factory.mktemp("c") / "c.txt"
    p.write_text(" ".join(words), encoding="utf-8")
    c = ingest_corpus(p, V)
    assert c.tokens.max() < V and len(c.tokens) == len(words)


def test_bundled_corpus_is_deterministic():
    a = ingest_corpus(toy_corpus_path(), 100)
    b = ingest_corpus(toy_corpus_path(), 100)
    assert np.array_equal(a.tokens, b.tokens)
    assert a.tokens.max() < 100
    assert 40_000 < toy_corpus_path().stat().st_size < 60_000
