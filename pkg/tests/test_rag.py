import random

import numpy as np
import pytest

from srscreen.corpus import ArticleView
from srscreen.errors import ConfigError
from srscreen.gateway import ChatGateway, KeywordRuleBackend
from srscreen.guide import Polarity, Question
from srscreen.rag import (
    HashEmbeddingBackend,
    RagAnswerer,
    VectorIndex,
    build_index,
    chunk_text,
)


def view(text, article_id="a1"):
    return ArticleView(id=article_id, title="T", abstract=None, fulltext=text)


# ------------------------------------------------------------------ chunking

def test_chunk_arithmetic_no_boundaries():
    # 2500 chars with no sentence boundaries: raw stride starts 0/800/1600,
    # stopping once a window's end reaches the text end
    text = "x" * 2500
    chunks = chunk_text(text, size=1000, overlap=200)
    assert [c.char_span for c in chunks] == [(0, 1000), (800, 1800), (1600, 2500)]
    assert [c.index for c in chunks] == [0, 1, 2]


def test_chunk_short_text_single_chunk():
    chunks = chunk_text("short.", size=1000, overlap=200)
    assert len(chunks) == 1
    assert chunks[0].char_span == (0, 6)


def test_chunk_snaps_to_sentence_boundary():
    # a period 50 chars before the stride point: start snaps to just after it
    text = "a" * 749 + ". " + "b" * 2000
    chunks = chunk_text(text, size=1000, overlap=200)
    assert chunks[1].char_span[0] == 751  # m.end() of ". " at 749
    assert chunks[1].char_span[1] == 1800  # end stays on the raw grid


def test_chunk_no_boundary_within_window_keeps_raw_start():
    text = "a" * 500 + ". " + "b" * 2000
    chunks = chunk_text(text, size=1000, overlap=200)
    # boundary at 502 is more than 200 chars before stride point 800
    assert chunks[1].char_span[0] == 800


def test_chunk_coverage_random_texts():
    rng = random.Random(11)
    alphabet = "abc def. ghi\njkl mno? pqr!"
    for trial in range(100):
        n = rng.randint(1, 5000)
        text = "".join(rng.choice(alphabet) for _ in range(n))
        size = rng.randint(50, 800)
        overlap = rng.randint(0, size - 1)
        chunks = chunk_text(text, size=size, overlap=overlap)
        covered = np.zeros(len(text), dtype=bool)
        prev_start = -1
        for c in chunks:
            lo, hi = c.char_span
            assert 0 <= lo < hi <= len(text)
            assert c.text == text[lo:hi]
            assert lo > prev_start  # spans strictly in order
            prev_start = lo
            covered[lo:hi] = True
        assert covered.all(), f"gap in trial {trial}"


def test_chunk_config_validation():
    with pytest.raises(ConfigError):
        chunk_text("abc", size=100, overlap=100)
    with pytest.raises(ConfigError):
        chunk_text("abc", size=100, overlap=-1)
    with pytest.raises(ConfigError):
        chunk_text("", size=100, overlap=10)


# ---------------------------------------------------------------- embeddings

def test_hash_embedding_deterministic_and_normalized():
    be = HashEmbeddingBackend(dim=64)
    a = be.embed(["vitamin d falls trial"])
    b = be.embed(["vitamin d falls trial"])
    assert np.array_equal(a, b)
    assert a.shape == (1, 64)
    assert np.linalg.norm(a[0]) == pytest.approx(1.0)


def test_hash_embedding_nonempty_has_positive_norm():
    be = HashEmbeddingBackend()
    vecs = be.embed(["a", "zzz 123", "the quick brown fox"])
    assert (np.linalg.norm(vecs, axis=1) > 0).all()


def test_hash_embedding_empty_text_is_zero_vector():
    be = HashEmbeddingBackend()
    assert np.linalg.norm(be.embed(["...!!!"])[0]) == 0.0


# --------------------------------------------------------------------- top-k

def test_top_k_identity_oracle():
    # orthonormal rows: querying with row i must return i first with score 1
    vectors = np.eye(8)
    index = VectorIndex("a1", 8, chunks=[None] * 8, vectors=vectors)
    for i in range(8):
        ranked = index.top_k(vectors[i], k=3)
        assert ranked[0] == (i, pytest.approx(1.0))


def test_top_k_tie_breaks_by_lower_index():
    vectors = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    index = VectorIndex("a1", 2, chunks=[None] * 3, vectors=vectors)
    ranked = index.top_k(np.array([1.0, 0.0]), k=3)
    assert [i for i, _ in ranked] == [0, 1, 2]


def test_top_k_against_brute_force_oracle():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n, d = rng.integers(1, 40), 16
        vectors = rng.normal(size=(int(n), d))
        query = rng.normal(size=d)
        index = VectorIndex("a1", d, chunks=[None] * int(n), vectors=vectors)
        k = int(rng.integers(1, 10))
        got = index.top_k(query, k)
        cos = vectors @ query / (
            np.linalg.norm(vectors, axis=1) * np.linalg.norm(query)
        )
        want = sorted(range(int(n)), key=lambda i: (-cos[i], i))[: min(k, int(n))]
        assert [i for i, _ in got] == want
        for i, s in got:
            assert s == pytest.approx(cos[i])


def test_top_k_k_larger_than_corpus():
    index = VectorIndex("a1", 2, chunks=[None] * 2, vectors=np.eye(2))
    assert len(index.top_k(np.array([1.0, 0.0]), k=10)) == 2


def test_top_k_dimension_mismatch():
    index = VectorIndex("a1", 4, chunks=[], vectors=np.zeros((0, 4)))
    with pytest.raises(ConfigError, match="dimension"):
        index.top_k(np.zeros(3), k=1)


# --------------------------------------------------------------------- cache

def test_index_cache_hit_skips_embedding(tmp_path):
    be = HashEmbeddingBackend(dim=32)
    art = view("First sentence. " * 200)
    first = build_index(art, be, size=400, overlap=100, cache_dir=tmp_path)
    calls_after_first = be.calls
    second = build_index(art, be, size=400, overlap=100, cache_dir=tmp_path)
    assert be.calls == calls_after_first  # no new embedding calls
    assert np.array_equal(first.vectors, second.vectors)
    assert [c.char_span for c in first.chunks] == [c.char_span for c in second.chunks]
    assert [c.text for c in first.chunks] == [c.text for c in second.chunks]


def test_index_cache_keyed_by_config(tmp_path):
    be = HashEmbeddingBackend(dim=32)
    art = view("Sentence one. " * 200)
    build_index(art, be, size=400, overlap=100, cache_dir=tmp_path)
    before = be.calls
    build_index(art, be, size=500, overlap=100, cache_dir=tmp_path)
    assert be.calls == before + 1  # different config -> cache miss


def test_index_requires_fulltext():
    with pytest.raises(ConfigError, match="no full text"):
        build_index(ArticleView(id="a1", title="T", abstract=None, fulltext=None),
                    HashEmbeddingBackend())


# ----------------------------------------------------------- plant-and-probe

def test_retrieval_finds_planted_passage():
    rng = random.Random(3)
    filler_words = ["lorem", "ipsum", "dolor", "sit", "amet", "consectetur"]
    filler = " ".join(rng.choice(filler_words) for _ in range(2000))
    planted = ("The primary outcome was falls incidence measured with monthly "
               "calendars over twelve months of vitamin d supplementation.")
    pos = len(filler) // 2
    text = filler[:pos] + " " + planted + " " + filler[pos:]

    be = HashEmbeddingBackend()
    index = build_index(view(text), be, size=500, overlap=100)
    gateway = ChatGateway(KeywordRuleBackend([(r".", r"falls incidence", "yes")],
                                             default="no"))
    answerer = RagAnswerer(gateway, be, k=3, chunk_size=500, overlap=100)
    q = Question(id="Q5", text="Was falls incidence a measured outcome of "
                               "supplementation?", polarity=Polarity.INCLUSION_GATE)
    chunks = answerer.retrieve(index, q)
    assert any(planted[:40] in c.text for c in chunks)
    answer, raw, used = answerer.answer_question(view(text), q, index)
    assert raw == "yes"
    assert used == [c.index for c in chunks]


def test_retrieve_returns_document_order():
    # many similar sentences so top-k picks several; indices must be sorted
    text = ". ".join(f"falls outcome sentence number {i} vitamin d" for i in range(80))
    be = HashEmbeddingBackend()
    index = build_index(view(text), be, size=200, overlap=50)
    answerer = RagAnswerer(ChatGateway(KeywordRuleBackend([])), be, k=5,
                           chunk_size=200, overlap=50)
    q = Question(id="Q1", text="falls outcome vitamin d?",
                 polarity=Polarity.INCLUSION_GATE)
    chunks = answerer.retrieve(index, q)
    indices = [c.index for c in chunks]
    assert indices == sorted(indices)
    assert len(indices) == 5
