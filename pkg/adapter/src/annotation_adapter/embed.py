"""Vendor embedding client with a JSONL cache and bounded concurrency.

Wire format: POST ``{"model": name, "input": [texts]}`` returning ``{"data":
[{"embedding": [...]}, ...]}`` in input order. Vendor vectors are mapped to
the pipeline's convention right here (unit norm, fixed dimension d) so the
rest of the adapter never sees vendor shapes. Transport errors and 5xx
responses are retried with exponential backoff; any 4xx is permanent.
Requests go out batch by batch with at most ``config.concurrency`` in
flight; a bearer token is attached when the env var named by
``config.auth_env`` is set.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor

import requests

from .config import AdapterError


def _normalize(vec, d, what):
    if not isinstance(vec, list) or len(vec) != d:
        got = len(vec) if isinstance(vec, list) else "none"
        raise AdapterError(f"{what}: embedding has length {got}, expected {d}")
    try:
        vals = [float(x) for x in vec]
    except (TypeError, ValueError):
        raise AdapterError(f"{what}: embedding holds a non-numeric value") from None
    nrm = math.sqrt(sum(x * x for x in vals))
    if not math.isfinite(nrm) or nrm <= 0.0:
        raise AdapterError(f"{what}: embedding norm {nrm} cannot be normalized")
    return [x / nrm for x in vals]


def _read_cache(path, d):
    got = {}
    if path and os.path.exists(path):
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    got[rec["text"]] = _normalize(rec["embedding"], d,
                                                  f"{path}:{lineno}")
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise AdapterError(f"{path}:{lineno}: bad cache line: {exc}") from exc
    return got


def _post_batch(batch, config):
    headers = {}
    token = os.environ.get(config.auth_env, "")
    if token:
        headers["Authorization"] = f"Bearer {token}"
    last = None
    for attempt in range(config.max_retries + 1):
        if attempt:
            time.sleep(config.backoff * (2 ** (attempt - 1)))
        try:
            resp = requests.post(config.endpoint,
                                 json={"model": config.model, "input": list(batch)},
                                 headers=headers, timeout=config.timeout)
        except requests.RequestException as exc:
            last = f"transport error: {exc}"
            continue
        if resp.status_code >= 500:
            last = f"status {resp.status_code}"
            continue
        if resp.status_code != 200:
            raise AdapterError(
                f"embedding endpoint returned {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json().get("data")
        except ValueError as exc:
            raise AdapterError(f"embedding endpoint sent non-JSON: {exc}") from exc
        if not isinstance(data, list) or len(data) != len(batch):
            got = len(data) if isinstance(data, list) else "no"
            raise AdapterError(
                f"embedding endpoint sent {got} vectors for {len(batch)} texts")
        return [_normalize(item.get("embedding"), config.d,
                           f"embedding for {text[:40]!r}")
                for text, item in zip(batch, data)]
    raise AdapterError(
        f"embedding endpoint failed after {config.max_retries + 1} attempts: {last}")


def embed_texts(texts, config):
    """Unit-norm d-vectors for texts, in input order.

    Cache hits are served from config.cache_path; the rest go to the endpoint
    in batches and the fresh vectors are appended to the cache. Without an
    endpoint (cache-only mode) any miss is an error.
    """
    got = _read_cache(config.cache_path, config.d)
    todo = [t for t in dict.fromkeys(texts) if t not in got]
    if todo:
        if not config.endpoint:
            raise AdapterError(
                f"cache-only mode: {len(todo)} texts missing from {config.cache_path!r}")
        batches = [todo[i:i + config.batch_size]
                   for i in range(0, len(todo), config.batch_size)]
        with ThreadPoolExecutor(max_workers=config.concurrency) as ex:
            results = list(ex.map(lambda b: _post_batch(b, config), batches))
        fresh = {}
        for batch, vecs in zip(batches, results):
            fresh.update(zip(batch, vecs))
        got.update(fresh)
        if config.cache_path:
            with open(config.cache_path, "a", encoding="utf-8") as fh:
                for t in todo:
                    fh.write(json.dumps({"text": t, "embedding": fresh[t]},
                                        sort_keys=True) + "\n")
    return [got[t] for t in texts]
