"""Full-text retrieval machinery: chunking, embeddings, per-article top-k search.

Each article's full text is its own document set; queries never cross
articles. The bundled hash embedding is deterministic across runs and
platforms so retrieval is testable offline; an HTTP embedding backend
plugs in for live runs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass

import numpy as np

from .corpus import ArticleView
from .errors import ConfigError
from .gateway import ChatGateway, build_prompt, parse_answer, parse_outcomes
from .guide import Answer, OutcomeSet, Phase, Question

log = logging.getLogger(__name__)

_SENTENCE_BOUNDARY = re.compile(r"[.!?]\s|\n")
_SNAP_WINDOW = 200


@dataclass(frozen=True)
class Chunk:
    article_id: str
    index: int
    text: str
    char_span: tuple[int, int]


def chunk_text(text: str, size: int = 1000, overlap: int = 200,
               article_id: str = "") -> list[Chunk]:
    """Split text into fixed-size windows with overlap.

    Window starts sit on the (size - overlap) stride and are snapped
    backward to the nearest sentence boundary within 200 characters when
    one exists; ends stay on the raw grid so the spans always cover the
    whole text.
    """
    if overlap < 0 or size <= overlap:
        raise ConfigError(f"need size > overlap >= 0, got size={size} overlap={overlap}")
    if not text:
        raise ConfigError("cannot chunk empty text")
    stride = size - overlap
    chunks: list[Chunk] = []
    prev_start = -1
    raw_start = 0
    index = 0
    n = len(text)
    while raw_start < n:
        end = min(raw_start + size, n)
        start = raw_start
        if raw_start > 0:
            window_lo = max(0, raw_start - _SNAP_WINDOW)
            best = None
            for m in _SENTENCE_BOUNDARY.finditer(text, window_lo, raw_start):
                best = m.end()
            if best is not None:
                start = best
        start = max(start, prev_start + 1)  # keep spans strictly in-order
        chunks.append(Chunk(article_id=article_id, index=index,
                            text=text[start:end], char_span=(start, end)))
        prev_start = start
        index += 1
        if end >= n:
            break
        raw_start += stride
    return chunks


class HashEmbeddingBackend:
    """Deterministic token-hashing embedding for offline tests.

    Tokens are hashed (md5, platform-independent) into a fixed-dimension
    count vector, then L2-normalized; non-empty text always has norm > 0.
    """

    def __init__(self, dim: int = 256):
        self.dim = dim
        self.name = f"hash-{dim}"
        self.calls = 0

    def embed(self, texts: list[str]) -> np.ndarray:
        self.calls += 1
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for token in re.findall(r"[a-z0-9]+", text.lower()):
                digest = hashlib.md5(token.encode("utf-8")).hexdigest()
                out[row, int(digest[:8], 16) % self.dim] += 1.0
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        np.divide(out, norms, out=out, where=norms > 0)
        return out


class HttpEmbeddingBackend:
    """Embeddings-API client; config mirrors the chat backend's."""

    def __init__(self, base_url: str, model: str, dim: int,
                 api_key_env: str = "SRSCREEN_API_KEY", timeout: float = 60.0):
        import httpx

        self.dim = dim
        self.name = f"http-embed:{model}"
        self.model = model
        key = os.environ.get(api_key_env, "")
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._client = httpx.Client(base_url=base_url, timeout=timeout, headers=headers)

    def embed(self, texts: list[str]) -> np.ndarray:
        resp = self._client.post("/embeddings", json={"model": self.model, "input": texts})
        resp.raise_for_status()
        data = resp.json()["data"]
        return np.asarray([item["embedding"] for item in data], dtype=np.float64)


@dataclass
class VectorIndex:
    article_id: str
    dimension: int
    chunks: list[Chunk]
    vectors: np.ndarray  # (n_chunks, dimension), rows L2-normalized upstream or not

    def top_k(self, query_vector: np.ndarray, k: int) -> list[tuple[int, float]]:
        """Cosine ranking; ties broken by lower chunk index."""
        if k < 1:
            raise ConfigError(f"k must be >= 1, got {k}")
        query_vector = np.asarray(query_vector, dtype=np.float64)
        if query_vector.shape != (self.dimension,):
            raise ConfigError(
                f"query dimension {query_vector.shape} != index dimension {self.dimension}"
            )
        qn = np.linalg.norm(query_vector)
        vn = np.linalg.norm(self.vectors, axis=1)
        denom = vn * (qn if qn > 0 else 1.0)
        scores = self.vectors @ query_vector
        with np.errstate(invalid="ignore", divide="ignore"):
            scores = np.where(denom > 0, scores / np.where(denom > 0, denom, 1.0), 0.0)
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
        return [(i, float(scores[i])) for i in order[: min(k, len(scores))]]


def _config_hash(size: int, overlap: int, backend_name: str) -> str:
    blob = f"size={size};overlap={overlap};backend={backend_name}"
    return hashlib.sha1(blob.encode("utf-8")).hexdigest()[:12]


def build_index(article: ArticleView, embedding_backend, size: int = 1000,
                overlap: int = 200, cache_dir=None) -> VectorIndex:
    """Chunk and embed one article; results are cached by (article, config, backend)."""
    if not article.fulltext:
        raise ConfigError(f"article {article.id} has no full text to index")
    cache_path = None
    if cache_dir is not None:
        key = _config_hash(size, overlap, embedding_backend.name)
        cache_path = os.path.join(cache_dir, f"{article.id}.{key}.npz")
        if os.path.exists(cache_path):
            return _load_index(cache_path, article.id)
    chunks = chunk_text(article.fulltext, size=size, overlap=overlap, article_id=article.id)
    vectors = embedding_backend.embed([c.text for c in chunks])
    index = VectorIndex(
        article_id=article.id,
        dimension=embedding_backend.dim,
        chunks=chunks,
        vectors=vectors,
    )
    if cache_path is not None:
        os.makedirs(cache_dir, exist_ok=True)
        meta = json.dumps([{"index": c.index, "span": c.char_span, "text": c.text}
                           for c in chunks])
        np.savez(cache_path, vectors=vectors, meta=np.array(meta))
    return index


def _load_index(cache_path, article_id) -> VectorIndex:
    data = np.load(cache_path, allow_pickle=False)
    meta = json.loads(str(data["meta"]))
    chunks = [
        Chunk(article_id=article_id, index=m["index"], text=m["text"],
              char_span=tuple(m["span"]))
        for m in meta
    ]
    vectors = data["vectors"]
    return VectorIndex(article_id=article_id, dimension=vectors.shape[1],
                       chunks=chunks, vectors=vectors)


class RagAnswerer:
    """Answers full-text questions from retrieved context via the gateway."""

    def __init__(self, gateway: ChatGateway, embedding_backend, k: int = 5,
                 chunk_size: int = 1000, overlap: int = 200, cache_dir=None):
        self.gateway = gateway
        self.embedding = embedding_backend
        self.k = k
        self.chunk_size = chunk_size
        self.overlap = overlap
        self.cache_dir = cache_dir

    def index_for(self, article: ArticleView) -> VectorIndex:
        return build_index(article, self.embedding, size=self.chunk_size,
                           overlap=self.overlap, cache_dir=self.cache_dir)

    def retrieve(self, index: VectorIndex, question: Question) -> list[Chunk]:
        query = self.embedding.embed([question.text])[0]
        ranked = index.top_k(query, self.k)
        # context block keeps document order, whatever the rank order was
        picked = sorted(i for i, _ in ranked)
        return [index.chunks[i] for i in picked]

    def answer_question(self, article: ArticleView, question: Question,
                        index: VectorIndex) -> tuple[Answer, str, list[int]]:
        """Returns (answer, raw text, chunk indices used) for the audit trail."""
        chunks = self.retrieve(index, question)
        bundle = build_prompt(
            question, article, Phase.FULL_TEXT,
            context_chunks=[(c.index, c.text) for c in chunks],
        )
        response = self.gateway.ask(bundle)
        answer = parse_answer(response.text, question_id=question.id)
        return answer, response.text, [c.index for c in chunks]

    def answer_outcomes(self, article: ArticleView, question: Question,
                        index: VectorIndex) -> tuple[OutcomeSet, str, list[int]]:
        chunks = self.retrieve(index, question)
        bundle = build_prompt(
            question, article, Phase.FULL_TEXT,
            context_chunks=[(c.index, c.text) for c in chunks],
        )
        response = self.gateway.ask(bundle)
        return parse_outcomes(response.text), response.text, [c.index for c in chunks]
