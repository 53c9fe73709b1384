"""Corpus ingestion, identifier suppression, and semantic chunking.

A corpus is a flat list of text chunks drawn from a set of documents. Each
chunk carries the named entities found in it, grouped by category, and
optionally a unit-norm embedding. Entity strings must appear verbatim in the
chunk text; that substring property is what makes entity swapping a pure text
substitution later on.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace

import numpy as np

NORM_TOL = 1e-6


class CorpusError(ValueError):
    """An ingest file or corpus operation violates the corpus schema."""


@dataclass(frozen=True)
class SuppressionRule:
    """A direct-identifier pattern and the placeholder that replaces it."""

    pattern: str
    placeholder: str
    case_insensitive: bool = True
    regex: bool = False

    def __post_init__(self):
        if not self.pattern:
            raise CorpusError("suppression rule has an empty pattern")
        if not (self.placeholder.startswith("[") and self.placeholder.endswith("]")):
            raise CorpusError(
                f"placeholder {self.placeholder!r} must be bracketed, e.g. '[URL]'"
            )

    def compiled(self):
        flags = re.IGNORECASE if self.case_insensitive else 0
        pat = self.pattern if self.regex else re.escape(self.pattern)
        return re.compile(pat, flags)


@dataclass
class Chunk:
    id: str
    doc_id: str
    text: str
    entities: dict[str, list[str]] = field(default_factory=dict)
    embedding: np.ndarray | None = None

    def entity_list(self, category):
        return self.entities.get(category, [])


@dataclass
class Corpus:
    chunks: list[Chunk]
    categories: list[str]
    d: int

    @property
    def n(self):
        return len(self.chunks)

    @property
    def doc_ids(self):
        return sorted({c.doc_id for c in self.chunks})

    @property
    def m(self):
        return len({c.doc_id for c in self.chunks})

    def chunk_by_id(self, chunk_id):
        for c in self.chunks:
            if c.id == chunk_id:
                return c
        raise KeyError(chunk_id)

    def embedding_matrix(self):
        """Stack all embeddings into an (n, d) array; every chunk must have one."""
        missing = [c.id for c in self.chunks if c.embedding is None]
        if missing:
            raise CorpusError(f"chunks without embeddings: {missing[:5]}"
                              + (" ..." if len(missing) > 5 else ""))
        return np.vstack([c.embedding for c in self.chunks])


def _validate_chunk(raw, i, categories, d, require_embeddings):
    if not isinstance(raw, dict):
        raise CorpusError(f"chunk #{i} is not an object")
    for key in ("id", "doc_id", "text"):
        if not isinstance(raw.get(key), str) or not raw.get(key):
            raise CorpusError(f"chunk #{i}: missing or empty string field {key!r}")
    cid = raw["id"]
    ents = raw.get("entities", {})
    if not isinstance(ents, dict):
        raise CorpusError(f"chunk {cid!r}: entities must be an object")
    entities = {}
    for cat, values in ents.items():
        if cat not in categories:
            raise CorpusError(f"chunk {cid!r}: unknown entity category {cat!r}")
        if not isinstance(values, list) or any(not isinstance(v, str) for v in values):
            raise CorpusError(f"chunk {cid!r}: entities[{cat!r}] must be a list of strings")
        for v in values:
            if not v:
                raise CorpusError(f"chunk {cid!r}: empty entity string in {cat!r}")
            if v not in raw["text"]:
                raise CorpusError(
                    f"chunk {cid!r}: entity {v!r} ({cat}) does not occur in the chunk text"
                )
        entities[cat] = list(values)
    emb = raw.get("embedding")
    if emb is None:
        if require_embeddings:
            raise CorpusError(f"chunk {cid!r}: embedding is required")
        vec = None
    else:
        vec = np.asarray(emb, dtype=float)
        if vec.ndim != 1 or vec.shape[0] != d:
            raise CorpusError(f"chunk {cid!r}: embedding has length {vec.shape}, expected {d}")
        nrm = np.linalg.norm(vec)
        if abs(nrm - 1.0) > NORM_TOL:
            raise CorpusError(f"chunk {cid!r}: embedding norm {nrm:.8f} is not 1 within {NORM_TOL}")
    return Chunk(id=cid, doc_id=raw["doc_id"], text=raw["text"],
                 entities=entities, embedding=vec)


def load_corpus(path, require_embeddings=True):
    """Parse and validate an ingest JSON file.

    The file holds ``{"d": int, "categories": [str], "chunks": [...]}`` where
    each chunk is ``{"id", "doc_id", "text", "entities": {cat: [str]},
    "embedding": [float] * d}``. Embeddings may be omitted per chunk only when
    ``require_embeddings`` is False (files destined for re-embedding).

    Raises CorpusError naming the offending record on any violation.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CorpusError(f"{path}: top level must be an object")
    d = doc.get("d")
    if not isinstance(d, int) or d < 2:
        raise CorpusError(f"{path}: 'd' must be an integer >= 2")
    categories = doc.get("categories")
    if (not isinstance(categories, list) or not categories
            or any(not isinstance(c, str) or not c for c in categories)):
        raise CorpusError(f"{path}: 'categories' must be a non-empty list of strings")
    if len(set(categories)) != len(categories):
        raise CorpusError(f"{path}: duplicate entries in 'categories'")
    raw_chunks = doc.get("chunks")
    if not isinstance(raw_chunks, list) or not raw_chunks:
        raise CorpusError(f"{path}: 'chunks' must be a non-empty list")
    cat_set = set(categories)
    chunks = []
    seen = set()
    for i, raw in enumerate(raw_chunks):
        ch = _validate_chunk(raw, i, cat_set, d, require_embeddings)
        if ch.id in seen:
            raise CorpusError(f"duplicate chunk id {ch.id!r}")
        seen.add(ch.id)
        chunks.append(ch)
    corpus = Corpus(chunks=chunks, categories=list(categories), d=d)
    if corpus.m < 2:
        raise CorpusError("corpus must span at least 2 documents; swapping is cross-document")
    return corpus


def corpus_to_json(corpus, omit_embeddings_for=()):
    """Serialize back to the ingest schema. ``omit_embeddings_for`` lists chunk
    ids whose embeddings are stale (post-swap) and must not be written."""
    omit = set(omit_embeddings_for)
    out = {"d": corpus.d, "categories": list(corpus.categories), "chunks": []}
    for c in corpus.chunks:
        rec = {"id": c.id, "doc_id": c.doc_id, "text": c.text,
               "entities": {k: list(v) for k, v in c.entities.items() if v}}
        if c.embedding is not None and c.id not in omit:
            rec["embedding"] = [float(x) for x in c.embedding]
        out["chunks"].append(rec)
    return out


def save_corpus(corpus, path, omit_embeddings_for=()):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(corpus_to_json(corpus, omit_embeddings_for), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _apply_pattern(text, rx, placeholder):
    return rx.subn(placeholder, text)


def suppress_direct_identifiers(corpus, rules):
    """Replace direct-identifier patterns with placeholders, corpus-wide.

    Returns ``(new_corpus, counts)`` where counts maps each rule's pattern to
    the number of replacements made in chunk texts. Entity strings are rewritten
    with the same substitution; an entity that collapses to the bare placeholder
    of some rule is dropped from its list (it *was* the identifier). Chunk count
    and order are preserved. Applying the same literal rules twice is a no-op.
    """
    compiled = [(r, r.compiled()) for r in rules]
    counts = {r.pattern: 0 for r in rules}
    placeholders = {r.placeholder for r in rules}
    new_chunks = []
    for c in corpus.chunks:
        text = c.text
        for rule, rx in compiled:
            text, k = _apply_pattern(text, rx, rule.placeholder)
            counts[rule.pattern] += k
        entities = {}
        for cat, values in c.entities.items():
            kept = []
            for v in values:
                for rule, rx in compiled:
                    v = rx.sub(rule.placeholder, v)
                if v in placeholders:
                    continue
                kept.append(v)
            if kept:
                entities[cat] = kept
        new_chunks.append(replace(c, text=text, entities=entities))
    return Corpus(chunks=new_chunks, categories=list(corpus.categories), d=corpus.d), counts


def semantic_chunk(sentences, threshold):
    """Group consecutive sentences into chunks at semantic breakpoints.

    Parameters
    ----------
    sentences : list of (text, embedding) pairs, embeddings unit-norm and of a
        common dimension.
    threshold : percentile in [0, 100]. A breakpoint is inserted after sentence
        i iff the cosine distance between sentences i and i+1 strictly exceeds
        the threshold-th percentile (linear interpolation) of all consecutive
        distances.

    Returns a list of chunks, each a list of sentence indices; indices are a
    partition of range(len(sentences)) in order. A single sentence yields
    ``[[0]]``. Raising the threshold never increases the number of chunks.
    """
    if not 0 <= threshold <= 100:
        raise ValueError(f"threshold must be in [0, 100], got {threshold}")
    if not sentences:
        raise ValueError("no sentences to chunk")
    embs = []
    d = None
    for i, (text, emb) in enumerate(sentences):
        v = np.asarray(emb, dtype=float)
        if d is None:
            d = v.shape[0]
        if v.ndim != 1 or v.shape[0] != d:
            raise ValueError(f"sentence #{i}: embedding dimension mismatch")
        nrm = np.linalg.norm(v)
        if abs(nrm - 1.0) > NORM_TOL:
            raise ValueError(f"sentence #{i}: embedding norm {nrm:.8f} is not 1")
        embs.append(v)
    if len(embs) == 1:
        return [[0]]
    X = np.vstack(embs)
    dists = 1.0 - np.sum(X[:-1] * X[1:], axis=1)
    cut = np.percentile(dists, threshold)
    groups = [[0]]
    for i in range(1, len(embs)):
        if dists[i - 1] > cut:
            groups.append([i])
        else:
            groups[-1].append(i)
    return groups
