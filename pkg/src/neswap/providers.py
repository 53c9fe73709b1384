"""Embedding providers: deterministic stub, file cache, and HTTP endpoint.

All providers return unit-norm vectors; whatever a backend hands back is
re-normalized on receipt so downstream spherical models never see off-sphere
points.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np
import requests


class ProviderError(RuntimeError):
    """Embedding lookup or transport failed."""


@dataclass(frozen=True)
class EmbeddingRequest:
    chunk_id: str
    text: str


@dataclass
class ProviderConfig:
    kind: str = "stub"            # stub | cache | http
    d: int = 8
    endpoint: str = ""
    cache_path: str = ""
    max_batch: int = 128
    max_retries: int = 3
    backoff: float = 0.2
    auth_env: str = "NESWAP_EMBED_TOKEN"

    def __post_init__(self):
        if self.kind not in ("stub", "cache", "http"):
            raise ValueError(f"unknown provider kind {self.kind!r}")
        if self.d < 2:
            raise ValueError("embedding dimension must be >= 2")
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")


def content_hash(text):
    """Stable hex content key for cache files."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _normalize(vec, who):
    v = np.asarray(vec, dtype=float)
    nrm = np.linalg.norm(v)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise ProviderError(f"{who}: embedding has zero or non-finite norm")
    return v / nrm


def stub_vector(text, d):
    """Deterministic pseudo-embedding: a pure function of (text, d).

    The text's SHA-256 seeds a counter-based generator; d standard normals are
    drawn and normalized. Same text, same vector, on any machine.
    """
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "big")
    rng = np.random.Generator(np.random.Philox(key=key))
    return _normalize(rng.standard_normal(d), "stub")


def _embed_stub(reqs, config):
    return np.vstack([stub_vector(r.text, config.d) for r in reqs])


def _load_cache(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ProviderError(f"cache file {path!r} does not exist") from exc
    except json.JSONDecodeError as exc:
        raise ProviderError(f"cache file {path!r} is not valid JSON") from exc


def _embed_cache(reqs, config):
    cache = _load_cache(config.cache_path)
    missing = [r.chunk_id for r in reqs if content_hash(r.text) not in cache]
    if missing:
        raise ProviderError(
            "cache misses for chunk ids: " + ", ".join(missing[:10])
            + (" ..." if len(missing) > 10 else "")
        )
    rows = []
    for r in reqs:
        v = _normalize(cache[content_hash(r.text)], f"cache[{r.chunk_id}]")
        if v.shape[0] != config.d:
            raise ProviderError(
                f"cache[{r.chunk_id}]: dimension {v.shape[0]} != configured {config.d}"
            )
        rows.append(v)
    return np.vstack(rows)


def write_cache(path, texts_to_vectors):
    """Write a cache file mapping content hashes to vectors."""
    payload = {content_hash(t): [float(x) for x in v] for t, v in texts_to_vectors.items()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def _post_batch(texts, config):
    headers = {"Content-Type": "application/json"}
    token = os.environ.get(config.auth_env, "")
    if token:
        headers["Authorization"] = f"Bearer {token}"
    body = {"input": texts, "dim": config.d}
    last = None
    for attempt in range(config.max_retries + 1):
        try:
            resp = requests.post(config.endpoint, json=body, headers=headers, timeout=60)
            if resp.status_code >= 500:
                last = ProviderError(f"endpoint returned {resp.status_code}")
            elif resp.status_code != 200:
                raise ProviderError(f"endpoint returned {resp.status_code}: {resp.text[:200]}")
            else:
                payload = resp.json()
                embs = payload.get("embeddings")
                if not isinstance(embs, list) or len(embs) != len(texts):
                    raise ProviderError("endpoint response missing 'embeddings' of matching length")
                return embs
        except requests.RequestException as exc:
            last = ProviderError(f"transport error: {exc}")
        if attempt < config.max_retries:
            time.sleep(config.backoff * (2 ** attempt))
    raise last


def _embed_http(reqs, config):
    if not config.endpoint:
        raise ProviderError("http provider requires an endpoint URL")
    rows = []
    for start in range(0, len(reqs), config.max_batch):
        batch = reqs[start:start + config.max_batch]
        embs = _post_batch([r.text for r in batch], config)
        for r, e in zip(batch, embs):
            v = _normalize(e, f"endpoint[{r.chunk_id}]")
            if v.shape[0] != config.d:
                raise ProviderError(
                    f"endpoint[{r.chunk_id}]: dimension {v.shape[0]} != configured {config.d}"
                )
            rows.append(v)
    return np.vstack(rows)


_BACKENDS = {"stub": _embed_stub, "cache": _embed_cache, "http": _embed_http}


def embed(requests_list, config):
    """Embed a list of EmbeddingRequest, returning an (n, d) array of unit rows.

    Identical texts always produce identical vectors within one call, whatever
    the backend.
    """
    if not requests_list:
        return np.zeros((0, config.d))
    out = _BACKENDS[config.kind](list(requests_list), config)
    # same text -> same vector, enforced: collapse by content
    first = {}
    for i, r in enumerate(requests_list):
        h = content_hash(r.text)
        if h in first:
            out[i] = out[first[h]]
        else:
            first[h] = i
    return out
