"""Review embeddings: pluggable providers plus a deterministic offline hasher."""

from __future__ import annotations

import hashlib
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .llm import (API_KEY_ENV, BACKOFF_SECONDS, CacheKey, DiskCache, ProviderError,
                  ProviderUnavailable, TransportError, digest_of)
from .reviews import Review

logger = logging.getLogger(__name__)

INSTRUCTION = "Represent the app user review for clustering"
OFFLINE_DIM = 256
REMOTE_BATCH_SIZE = 64


class EmbeddingError(RuntimeError):
    pass


@dataclass(frozen=True)
class EmbeddingMatrix:
    ids: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=np.float64)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "vectors", vec)
        if vec.ndim != 2 or vec.shape[0] != len(self.ids):
            raise EmbeddingError(f"{vec.shape} matrix does not match {len(self.ids)} ids")
        if len(set(self.ids)) != len(self.ids):
            raise EmbeddingError("duplicate ids in embedding matrix")
        if not np.all(np.isfinite(vec)):
            raise EmbeddingError("embedding contains non-finite values")

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)


class Embedder(Protocol):
    id: str

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def _trigram_slot(gram: str) -> tuple[int, float]:
    h = int.from_bytes(hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest(), "little")
    return h % OFFLINE_DIM, (1.0 if (h >> 32) & 1 else -1.0)


def offline_embed(text: str) -> np.ndarray:
    """Signed feature hashing of lower-cased character 3-grams, L2-normalized."""
    if not text:
        raise EmbeddingError("cannot embed empty text")
    padded = f" {text.lower()} "
    vec = np.zeros(OFFLINE_DIM)
    for i in range(len(padded) - 2):
        slot, sign = _trigram_slot(padded[i:i + 3])
        vec[slot] += sign
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        # every trigram cancelled out; fall back to a fixed unit vector
        vec[_trigram_slot(padded)[0]] = 1.0
        return vec
    return vec / norm


class OfflineEmbedder:
    id = "offline-trigram-256"
    dim = OFFLINE_DIM

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return np.vstack([offline_embed(t) for t in texts]) if texts else np.zeros((0, OFFLINE_DIM))


class RemoteEmbedder:
    """Embedding endpoint taking ``{model, input: [...]}`` and returning one vector per input.

    Each text is sent prefixed with the clustering instruction. Vectors are
    cached per text under the same content-addressed layout as chat completions.
    """

    def __init__(self, url: str, model: str = "hkunlp/instructor-base", *,
                 instruction: str = INSTRUCTION, api_key: str | None = None,
                 cache_dir: str | Path | None = None, batch_size: int = REMOTE_BATCH_SIZE,
                 max_in_flight: int = 4, timeout: float = 60.0, client=None,
                 sleep=time.sleep):
        import httpx

        self.url = url
        self.model = model
        self.instruction = instruction
        self.id = f"remote-embed:{url}"
        self.batch_size = batch_size
        self.max_in_flight = max_in_flight
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        if not self.api_key:
            raise ProviderError(f"environment variable {API_KEY_ENV} is not set")
        self.cache = DiskCache(cache_dir) if cache_dir is not None else None
        self._client = client or httpx.Client(timeout=timeout)
        self._sleep = sleep

    def prompt(self, text: str) -> str:
        return f"{self.instruction}: {text}"

    def _key(self, text: str) -> CacheKey:
        return CacheKey(digest_of("embed", self.id, self.model, self.instruction, text))

    def _fetch(self, texts: list[str]) -> list[list[float]]:
        import httpx

        body = {"model": self.model, "input": [self.prompt(t) for t in texts]}
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last = None
        for delay in (0.0, *BACKOFF_SECONDS):
            if delay:
                self._sleep(delay)
            try:
                resp = self._client.post(self.url, json=body, headers=headers)
            except httpx.HTTPError as exc:
                last = TransportError(str(exc))
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = TransportError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise EmbeddingError(f"embedding request rejected: HTTP {resp.status_code}")
            data = resp.json().get("data", [])
            vectors = [row["embedding"] for row in sorted(data, key=lambda r: r.get("index", 0))]
            if len(vectors) != len(texts):
                raise EmbeddingError(f"expected {len(texts)} vectors, got {len(vectors)}")
            return vectors
        raise ProviderUnavailable(f"embedding provider unavailable: {last}")

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        out: list = [None] * len(texts)
        todo = []
        for i, t in enumerate(texts):
            entry = self.cache.get(self._key(t)) if self.cache else None
            if entry is not None:
                out[i] = entry["vector"]
            else:
                todo.append(i)
        batches = [todo[i:i + self.batch_size] for i in range(0, len(todo), self.batch_size)]
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            fetched = list(pool.map(lambda idx: self._fetch([texts[i] for i in idx]), batches))
        for idx, vectors in zip(batches, fetched):
            for i, v in zip(idx, vectors):
                out[i] = v
                if self.cache:
                    self.cache.put(self._key(texts[i]), {"provider": self.id, "model": self.model,
                                                         "text": texts[i], "vector": v})
        return np.asarray(out, dtype=np.float64)


def embed_reviews(reviews: Sequence[Review], provider: Embedder) -> EmbeddingMatrix:
    if not reviews:
        raise EmbeddingError("no reviews to embed")
    vectors = provider.embed([r.text for r in reviews])
    return EmbeddingMatrix(tuple(r.id for r in reviews), vectors)


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine similarity is undefined for zero vectors")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))
