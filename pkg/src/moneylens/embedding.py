"""Text embeddings and similarity for contextual ranking.

Providers are pluggable behind a small contract: a name, a fixed dimension,
and a deterministic ``embed(text)``. The built-in provider hashes word tokens
and character trigrams into a fixed number of signed buckets, so the whole
engine is testable offline and reproducible across machines. A remote
provider speaks a one-POST HTTP protocol for real sentence encoders.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .references import ReferenceCorpus, ReferenceObject

__all__ = [
    "EmbeddingProvider",
    "HashedNgramProvider",
    "RemoteEmbeddingProvider",
    "ProviderUnavailableError",
    "ProviderProtocolError",
    "embed_text",
    "cosine_similarity",
    "top_k_similar",
    "EmbeddingIndex",
]

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_HASH_KEY = b"moneylens-embed-v1"  # fixed constant: vectors must match across runs/machines


class ProviderUnavailableError(RuntimeError):
    """The remote embedding endpoint could not be reached."""


class ProviderProtocolError(RuntimeError):
    """The remote embedding endpoint answered with a malformed response."""


class EmbeddingProvider:
    """Contract: ``name``, ``dims``, and deterministic ``embed(text)``.

    ``embed`` must return the bitwise-identical L2-normalized vector for the
    same text within a provider instance.
    """

    name: str
    dims: int

    def embed(self, text: str) -> np.ndarray:
        raise NotImplementedError

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([self.embed(t) for t in texts])


def _signed_hash(feature: str) -> tuple[int, float]:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8, key=_HASH_KEY).digest()
    h = int.from_bytes(digest, "big")
    return h >> 1, 1.0 if h & 1 else -1.0


class HashedNgramProvider(EmbeddingProvider):
    """Deterministic fallback: hashed word tokens + character trigrams.

    Stateless and safe for concurrent calls. No trained weights; similarity is
    purely lexical overlap, which is enough for ranking tests and for running
    the engine without network access.
    """

    def __init__(self, dims: int = 256):
        if dims <= 0:
            raise ValueError("dims must be positive")
        self.dims = dims
        self.name = f"hashed-ngram-{dims}"

    def _features(self, text: str) -> Iterable[str]:
        tokens = _TOKEN_RE.findall(text.lower())
        for tok in tokens:
            yield "w:" + tok
            padded = f"#{tok}#"
            for i in range(len(padded) - 2):
                yield "t:" + padded[i : i + 3]

    def embed(self, text: str) -> np.ndarray:
        text = text.strip()
        if not text:
            raise ValueError("cannot embed empty text")
        vec = np.zeros(self.dims, dtype=np.float64)
        for feature in self._features(text):
            bucket, sign = _signed_hash(feature)
            vec[bucket % self.dims] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # No alphanumeric content; fall back to a fixed direction so the
            # vector is still valid and deterministic.
            bucket, sign = _signed_hash("w:")
            vec[bucket % self.dims] = sign
            norm = 1.0
        return vec / norm


class RemoteEmbeddingProvider(EmbeddingProvider):
    """HTTP provider: POST {"texts": [...]} -> {"dims": n, "vectors": [[...]]}."""

    def __init__(self, url: str, timeout: float = 10.0):
        self.url = url
        self.timeout = timeout
        self.name = f"remote[{url}]"
        self.dims = 0  # learned from the first response

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        import httpx

        cleaned = [t.strip() for t in texts]
        if any(not t for t in cleaned):
            raise ValueError("cannot embed empty text")
        try:
            response = httpx.post(self.url, json={"texts": cleaned}, timeout=self.timeout)
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise ProviderUnavailableError(f"embedding endpoint {self.url}: {exc}") from exc
        try:
            body = response.json()
            dims = int(body["dims"])
            vectors = np.asarray(body["vectors"], dtype=np.float64)
            if vectors.shape != (len(cleaned), dims):
                raise ValueError(f"expected shape {(len(cleaned), dims)}, got {vectors.shape}")
        except (KeyError, TypeError, ValueError) as exc:
            raise ProviderProtocolError(f"embedding endpoint {self.url}: {exc}") from exc
        if self.dims and dims != self.dims:
            raise ProviderProtocolError(
                f"embedding endpoint {self.url}: dims changed from {self.dims} to {dims}"
            )
        self.dims = dims
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise ProviderProtocolError(f"embedding endpoint {self.url}: zero vector returned")
        return vectors / norms


def embed_text(provider: EmbeddingProvider, text: str) -> np.ndarray:
    """L2-normalized embedding of ``text`` under ``provider``.

    Raises ValueError on empty (after trim) input.
    """
    if not text or not text.strip():
        raise ValueError("cannot embed empty text")
    return provider.embed(text)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """dot(a, b) / (|a| |b|); errors on dimension mismatch or zero vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero vectors")
    return float(np.dot(a, b) / (na * nb))


@dataclass
class EmbeddingIndex:
    """Cached embeddings for a corpus, keyed by object id.

    Built once per (provider, corpus) and then read-only; rows are normalized
    so similarity against a normalized query is a plain dot product.
    """

    provider_name: str
    dims: int
    ids: list[str]
    matrix: np.ndarray

    def __post_init__(self) -> None:
        self._row: dict[str, int] = {oid: i for i, oid in enumerate(self.ids)}

    @classmethod
    def build(cls, corpus: ReferenceCorpus, provider: EmbeddingProvider) -> "EmbeddingIndex":
        ids = [o.id for o in corpus.objects]
        matrix = (
            provider.embed_batch([o.phrase for o in corpus.objects])
            if ids
            else np.zeros((0, provider.dims))
        )
        return cls(provider_name=provider.name, dims=matrix.shape[1] if ids else provider.dims, ids=ids, matrix=matrix)

    def vector(self, object_id: str) -> np.ndarray:
        return self.matrix[self._row[object_id]]

    def __contains__(self, object_id: str) -> bool:
        return object_id in self._row

    def top_k(self, query: np.ndarray, k: int) -> list[tuple[str, float]]:
        if k <= 0:
            raise ValueError("k must be positive")
        if query.shape != (self.dims,):
            raise ValueError(f"query dims {query.shape} do not match index dims {self.dims}")
        sims = self.matrix @ query
        order = sorted(range(len(self.ids)), key=lambda i: (-sims[i], self.ids[i]))
        return [(self.ids[i], float(sims[i])) for i in order[:k]]

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8") as f:
            for oid in self.ids:
                rec = {"id": oid, "provider": self.provider_name, "vector": self.vector(oid).tolist()}
                f.write(json.dumps(rec) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingIndex":
        path = Path(path)
        ids: list[str] = []
        rows: list[list[float]] = []
        provider_name = None
        with path.open("r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    oid, prov, vec = rec["id"], rec["provider"], rec["vector"]
                except (ValueError, KeyError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad cache record: {exc}") from exc
                if provider_name is None:
                    provider_name = prov
                elif prov != provider_name:
                    raise ValueError(f"{path}:{lineno}: mixed providers in cache")
                ids.append(oid)
                rows.append(vec)
        if provider_name is None:
            raise ValueError(f"{path}: empty embedding cache")
        matrix = np.asarray(rows, dtype=np.float64)
        return cls(provider_name=provider_name, dims=matrix.shape[1], ids=ids, matrix=matrix)


def top_k_similar(
    query: np.ndarray,
    corpus: ReferenceCorpus,
    index: EmbeddingIndex,
    k: int = 10,
    provider_name: str | None = None,
) -> list[tuple[ReferenceObject, float]]:
    """Top-k corpus objects by cosine to ``query``, ties broken by id.

    ``provider_name``, when given, must match the provider the index was
    built with; a mismatch means the query and corpus live in different
    spaces and the similarities would be meaningless.
    """
    if provider_name is not None and provider_name != index.provider_name:
        raise ValueError(
            f"provider mismatch: query from {provider_name!r}, index from {index.provider_name!r}"
        )
    return [(corpus.get(oid), sim) for oid, sim in index.top_k(query, k)]
