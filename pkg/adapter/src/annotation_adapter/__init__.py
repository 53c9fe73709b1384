"""Annotation adapter: raw text chunks to the swapping pipeline's ingest JSON.

Runs a pluggable NER backend over each chunk, maps its labels onto the six
entity categories, fetches embeddings from a vendor endpoint (with a JSONL
cache), and writes a schema-validated ingest file atomically. All semantics
beyond that (canonical keys, sorting, swapping) live in the main pipeline;
this package is a thin, replaceable shim."""

__version__ = "0.1.0"
