"""Sparse contingency tables over entity categories.

Every chunk maps to one cell of a p-way table. The value in a category is the
alphabetically sorted, ' & '-joined list of the chunk's entity strings there;
a chunk with no entities in a category contributes the empty value, kept as
None in cell keys. Only occupied cells are stored.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field


def encode_value(entity_list):
    """Canonical cell value for one category: sorted ' & ' join, None if empty.

    Sorting makes the encoding order-free; re-encoding a decoded value is
    idempotent.
    """
    if not entity_list:
        return None
    return " & ".join(sorted(entity_list))


def chunk_key(chunk, categories):
    return tuple(encode_value(chunk.entity_list(cat)) for cat in categories)


@dataclass
class ContingencyTable:
    categories: list[str]
    cells: dict = field(default_factory=dict)   # key tuple -> list of chunk ids

    @property
    def n(self):
        return sum(len(ids) for ids in self.cells.values())

    @property
    def k(self):
        return len(self.cells)

    def count(self, key):
        return len(self.cells.get(key, ()))

    def key_of(self, chunk):
        return chunk_key(chunk, self.categories)

    def add(self, chunk):
        self.cells.setdefault(self.key_of(chunk), []).append(chunk.id)

    def remove(self, chunk_id, key):
        ids = self.cells.get(key)
        if ids is None or chunk_id not in ids:
            raise KeyError(f"chunk {chunk_id!r} is not in cell {key!r}")
        ids.remove(chunk_id)
        if not ids:
            del self.cells[key]


@dataclass(frozen=True)
class FrequencyCounts:
    """Cell-size frequencies: s[j] = number of cells holding exactly j chunks."""

    s: dict
    n: int
    k: int

    def __post_init__(self):
        if any(j < 1 or c < 0 for j, c in self.s.items()):
            raise ValueError("frequency counts must have sizes >= 1 and counts >= 0")
        if sum(j * c for j, c in self.s.items()) != self.n:
            raise ValueError("frequency counts do not sum to n")
        if sum(self.s.values()) != self.k:
            raise ValueError("frequency counts do not sum to k cells")

    @property
    def s1(self):
        return self.s.get(1, 0)


def build_table(corpus, categories=None):
    """Build the sparse table over the given categories (default: all)."""
    cats = list(categories) if categories is not None else list(corpus.categories)
    unknown = [c for c in cats if c not in corpus.categories]
    if unknown:
        raise ValueError(f"unknown categories: {unknown}")
    if len(set(cats)) != len(cats):
        raise ValueError("duplicate categories")
    table = ContingencyTable(categories=cats)
    for chunk in corpus.chunks:
        table.add(chunk)
    return table


def marginalize(table, subset):
    """Project the table onto a subset of its categories (order preserved
    from the parent table); cells that collide are merged."""
    keep = [c for c in table.categories if c in subset]
    missing = [c for c in subset if c not in table.categories]
    if missing:
        raise ValueError(f"categories not in table: {missing}")
    if not keep:
        raise ValueError("marginal must keep at least one category")
    idx = [table.categories.index(c) for c in keep]
    out = ContingencyTable(categories=keep)
    for key, ids in table.cells.items():
        sub = tuple(key[i] for i in idx)
        out.cells.setdefault(sub, []).extend(ids)
    return out


def frequency_counts(table):
    """Sizes-of-cells frequencies; the sampling-formula sufficient statistic."""
    s = {}
    for ids in table.cells.values():
        j = len(ids)
        s[j] = s.get(j, 0) + 1
    return FrequencyCounts(s=s, n=table.n, k=table.k)


def sample_uniques(table):
    """Ids of chunks that are alone in their cell."""
    out = set()
    for ids in table.cells.values():
        if len(ids) == 1:
            out.add(ids[0])
    return out


def table_to_json(table):
    """JSON-safe dump: one record per occupied cell with count and member ids."""
    records = []
    for key, ids in sorted(table.cells.items(),
                           key=lambda kv: tuple("" if v is None else v for v in kv[0])):
        records.append({
            "key": ["" if v is None else v for v in key],
            "count": len(ids),
            "chunk_ids": sorted(ids),
        })
    return {"categories": list(table.categories), "cells": records}


def save_table(table, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table_to_json(table), fh, indent=1)
        fh.write("\n")


def save_frequency_csv(counts, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_size", "num_cells"])
        for j in sorted(counts.s):
            w.writerow([j, counts.s[j]])
