"""Chunk annotation: NER + embeddings -> the ingest JSON schema.

The output contract is owned by the main pipeline: ``{"d", "categories",
"chunks": [{"id", "doc_id", "text", "entities", "embedding"}]}`` with
entities grouped per category in document order and unit-norm embeddings.
``annotate()`` returns (doc, report); ``write_ingest()`` re-validates the
document and writes through a temp file + rename, so a half-written or
schema-breaking file never lands at the target path.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from collections import Counter

from .config import CATEGORIES, AdapterError
from .embed import embed_texts
from .ner import load_ner

NORM_TOL = 1e-6


def read_chunks_jsonl(path):
    """[(id, doc_id, text)] from a JSON-lines chunk list."""
    out = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AdapterError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            for key in ("id", "doc_id", "text"):
                if not isinstance(rec.get(key), str) or not rec.get(key):
                    raise AdapterError(f"{path}:{lineno}: missing or empty {key!r}")
            if rec["id"] in seen:
                raise AdapterError(f"{path}:{lineno}: duplicate chunk id {rec['id']!r}")
            seen.add(rec["id"])
            out.append((rec["id"], rec["doc_id"], rec["text"]))
    if not out:
        raise AdapterError(f"{path}: no chunks")
    return out


def annotate(chunks, config, ner=None):
    """Annotate (id, doc_id, text) triples into an ingest document.

    Returns (doc, report). Mentions whose NER label is missing from
    config.category_map are dropped and tallied per label in
    report["dropped_labels"]; kept mentions are counted per category in
    report["entity_counts"].
    """
    ner = ner if ner is not None else load_ner(config.ner_pipeline_name)
    vectors = embed_texts([text for _, _, text in chunks], config)
    dropped = Counter()
    kept = Counter()
    out = []
    for (cid, doc_id, text), vec in zip(chunks, vectors):
        per_cat = {}
        for label, surface, _ in sorted(ner(text), key=lambda m: m[2]):
            cat = config.category_map.get(label)
            if cat is None:
                dropped[label] += 1
                continue
            kept[cat] += 1
            per_cat.setdefault(cat, []).append(surface)
        out.append({"id": cid, "doc_id": doc_id, "text": text,
                    "entities": per_cat, "embedding": vec})
    doc = {"d": config.d, "categories": list(CATEGORIES), "chunks": out}
    report = {"chunks": len(out),
              "entity_counts": {c: kept.get(c, 0) for c in CATEGORIES},
              "dropped_labels": dict(sorted(dropped.items()))}
    return doc, report


def _check_doc(doc):
    """Every ingest-schema violation in the document, as one string each."""
    v = []
    if not isinstance(doc, dict):
        return ["top level must be an object"]
    d = doc.get("d")
    if not isinstance(d, int) or d < 2:
        v.append("'d' must be an integer >= 2")
        d = None
    cats = doc.get("categories")
    if (not isinstance(cats, list) or not cats
            or any(not isinstance(c, str) or not c for c in cats)):
        v.append("'categories' must be a non-empty list of strings")
        cats = []
    elif len(set(cats)) != len(cats):
        v.append("duplicate entries in 'categories'")
    chunks = doc.get("chunks")
    if not isinstance(chunks, list) or not chunks:
        v.append("'chunks' must be a non-empty list")
        return v
    cat_set = set(cats)
    seen = set()
    docs = set()
    for i, raw in enumerate(chunks):
        if not isinstance(raw, dict):
            v.append(f"chunk #{i} is not an object")
            continue
        cid = raw.get("id") if isinstance(raw.get("id"), str) else f"#{i}"
        for key in ("id", "doc_id", "text"):
            if not isinstance(raw.get(key), str) or not raw.get(key):
                v.append(f"chunk {cid!r}: missing or empty string field {key!r}")
        if raw.get("id") in seen:
            v.append(f"duplicate chunk id {cid!r}")
        seen.add(raw.get("id"))
        if isinstance(raw.get("doc_id"), str):
            docs.add(raw["doc_id"])
        text = raw.get("text") if isinstance(raw.get("text"), str) else ""
        ents = raw.get("entities", {})
        if not isinstance(ents, dict):
            v.append(f"chunk {cid!r}: entities must be an object")
            ents = {}
        for cat, values in ents.items():
            if cat not in cat_set:
                v.append(f"chunk {cid!r}: unknown entity category {cat!r}")
            if (not isinstance(values, list)
                    or any(not isinstance(x, str) for x in values)):
                v.append(f"chunk {cid!r}: entities[{cat!r}] must be a list of strings")
                continue
            for x in values:
                if not x:
                    v.append(f"chunk {cid!r}: empty entity string in {cat!r}")
                elif x not in text:
                    v.append(f"chunk {cid!r}: entity {x!r} ({cat}) "
                             "does not occur in the chunk text")
        emb = raw.get("embedding")
        if emb is None:
            v.append(f"chunk {cid!r}: embedding is required")
        elif (not isinstance(emb, list)
              or any(not isinstance(x, (int, float)) or isinstance(x, bool)
                     for x in emb)):
            v.append(f"chunk {cid!r}: embedding must be a list of numbers")
        else:
            if d is not None and len(emb) != d:
                v.append(f"chunk {cid!r}: embedding has length {len(emb)}, "
                         f"expected {d}")
            nrm = math.sqrt(sum(float(x) ** 2 for x in emb))
            if not math.isfinite(nrm) or abs(nrm - 1.0) > NORM_TOL:
                v.append(f"chunk {cid!r}: embedding norm {nrm:.8f} is not 1 "
                         f"within {NORM_TOL}")
    if len(docs) < 2:
        v.append("corpus must span at least 2 documents")
    return v


def validate_schema(path):
    """Field-by-field ingest-schema report for a file on disk.

    Returns {"chunks": n, "violations": [str]}; never raises on content
    problems, every violation is one entry naming the offending record.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        return {"chunks": 0, "violations": [f"{path}: unreadable: {exc}"]}
    chunks = doc.get("chunks") if isinstance(doc, dict) else None
    n = len(chunks) if isinstance(chunks, list) else 0
    return {"chunks": n, "violations": _check_doc(doc)}


def write_ingest(doc, path):
    """Self-validate, then write atomically (temp file + rename)."""
    violations = _check_doc(doc)
    if violations:
        raise AdapterError("ingest document failed self-validation: "
                           + "; ".join(violations[:5]))
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".ingest-", suffix=".json", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
