"""Entity swapping between chunks under release constraints.

A release names which entity categories are swapped (S), which stay fixed (F),
which are suppressed to a placeholder (C), and which are ignored (U), plus how
many swaps to perform. Swaps exchange entity strings between two chunks from
different documents, positionally per category, rewriting both texts by exact
string substitution. A chunk swaps at most once per run, so swapped texts and
entity lists never chain.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field, replace

from .contingency import ContingencyTable, chunk_key
from .corpus import Corpus

ROLES = ("S", "F", "C", "U")


class SwapIntegrityError(RuntimeError):
    """An entity annotation does not match its chunk text."""


@dataclass(frozen=True)
class Release:
    swap_count: int
    roles: dict
    cross_document: bool = True
    same_cluster: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.swap_count < 0:
            raise ValueError("swap_count must be >= 0")
        bad = {c: r for c, r in self.roles.items() if r not in ROLES}
        if bad:
            raise ValueError(f"unknown roles: {bad}; must be one of {ROLES}")
        if not self.cross_document:
            raise ValueError("swaps are cross-document by definition")
        if self.swap_count > 0 and not self.s_categories:
            raise ValueError("swap_count > 0 requires at least one S category")

    @property
    def s_categories(self):
        return [c for c, r in self.roles.items() if r == "S"]

    def validate_against(self, categories):
        missing = [c for c in categories if c not in self.roles]
        extra = [c for c in self.roles if c not in categories]
        if missing or extra:
            raise ValueError(
                f"roles must cover the corpus categories exactly; missing={missing}, extra={extra}"
            )


@dataclass(frozen=True)
class SwapRecord:
    chunk_a: str
    chunk_b: str
    category: str
    substitutions: tuple        # ((entity_from_a, entity_from_b), ...)
    leftovers: tuple            # ((chunk_id, entity), ...)


@dataclass
class SwapState:
    corpus: Corpus
    table: ContingencyTable
    records: list = field(default_factory=list)
    swapped_chunk_ids: set = field(default_factory=set)
    exhausted: bool = False


def initial_state(corpus, table):
    return SwapState(corpus=corpus, table=table)


def _pair_profile(chunk, categories, roles):
    key = chunk_key(chunk, categories)
    s_vals = tuple(v for v, c in zip(key, categories) if roles.get(c) == "S")
    other = tuple(v for v, c in zip(key, categories) if roles.get(c) != "S")
    return s_vals, other


def valid_pairs(corpus, table, memberships, release):
    """All unordered chunk-id pairs eligible for a swap under the release.

    A pair qualifies iff the chunks are in different documents, the same
    cluster (when constrained), differ in at least one non-S category of the
    table (swapping look-alikes would only re-index them), differ in at least
    one S category (otherwise the swap is a no-op), and each has at least one
    S-category entity.
    """
    release.validate_against(corpus.categories)
    cats = table.categories
    if not any(release.roles.get(c) == "S" for c in cats):
        raise ValueError("no S category present in the table")
    n = corpus.n
    profiles = []
    for chunk in corpus.chunks:
        s_vals, other = _pair_profile(chunk, cats, release.roles)
        profiles.append((chunk.id, chunk.doc_id, s_vals, other,
                         all(v is None for v in s_vals)))
    if release.same_cluster:
        groups = {}
        for i in range(n):
            groups.setdefault(int(memberships[i]), []).append(i)
        index_groups = groups.values()
    else:
        index_groups = [list(range(n))]
    out = set()
    for idx in index_groups:
        for a in range(len(idx)):
            ida, doca, sa, oa, empty_a = profiles[idx[a]]
            if empty_a:
                continue
            for b in range(a + 1, len(idx)):
                idb, docb, sb, ob, empty_b = profiles[idx[b]]
                if empty_b or doca == docb or sa == sb or oa == ob:
                    continue
                out.add((ida, idb) if ida < idb else (idb, ida))
    return out


def substitute(text, mapping):
    """Replace every key of mapping by its value, all occurrences at once.

    A single regex pass gives simultaneous semantics (A->B and B->A do not
    chain); alternatives are tried longest-first so a short entity never
    clobbers a longer one containing it.
    """
    if not mapping:
        return text
    keys = sorted(mapping, key=len, reverse=True)
    rx = re.compile("|".join(re.escape(k) for k in keys))
    return rx.sub(lambda m: mapping[m.group(0)], text)


def apply_swap(state, pair, s_categories):
    """Exchange S-category entities between the two chunks of the pair.

    Entity lists are paired positionally (first with first, ...); unpaired
    leftovers stay where they were. Both texts are rewritten by simultaneous
    exact-string substitution, the table rows move to the new cell keys, and
    both chunks join swapped_chunk_ids (their stored embeddings are stale).
    Returns a new state; the input state is untouched.
    """
    id_a, id_b = pair
    a = state.corpus.chunk_by_id(id_a)
    b = state.corpus.chunk_by_id(id_b)
    if a.doc_id == b.doc_id:
        raise ValueError(f"pair {pair} is within one document")

    map_a, map_b = {}, {}
    new_ents_a = {k: list(v) for k, v in a.entities.items()}
    new_ents_b = {k: list(v) for k, v in b.entities.items()}
    records = []
    for cat in s_categories:
        la = a.entity_list(cat)
        lb = b.entity_list(cat)
        if not la and not lb:
            continue
        m = min(len(la), len(lb))
        subs = tuple((la[i], lb[i]) for i in range(m))
        for ea, eb in subs:
            if ea not in a.text:
                raise SwapIntegrityError(f"chunk {id_a!r}: entity {ea!r} not in its text")
            if eb not in b.text:
                raise SwapIntegrityError(f"chunk {id_b!r}: entity {eb!r} not in its text")
            if ea != eb:
                map_a[ea] = eb
                map_b[eb] = ea
        leftovers = tuple([(id_a, e) for e in la[m:]] + [(id_b, e) for e in lb[m:]])
        if la:
            new_ents_a[cat] = [lb[i] for i in range(m)] + la[m:]
        if lb:
            new_ents_b[cat] = [la[i] for i in range(m)] + lb[m:]
        records.append(SwapRecord(chunk_a=id_a, chunk_b=id_b, category=cat,
                                  substitutions=subs, leftovers=leftovers))

    new_a = replace(a, text=substitute(a.text, map_a), entities=new_ents_a)
    new_b = replace(b, text=substitute(b.text, map_b), entities=new_ents_b)

    chunks = list(state.corpus.chunks)
    for i, c in enumerate(chunks):
        if c.id == id_a:
            chunks[i] = new_a
        elif c.id == id_b:
            chunks[i] = new_b
    corpus = Corpus(chunks=chunks, categories=list(state.corpus.categories),
                    d=state.corpus.d)

    table = ContingencyTable(categories=list(state.table.categories),
                             cells={k: list(v) for k, v in state.table.cells.items()})
    for old, new in ((a, new_a), (b, new_b)):
        table.remove(old.id, chunk_key(old, table.categories))
        table.add(new)

    return SwapState(corpus=corpus, table=table,
                     records=state.records + records,
                     swapped_chunk_ids=state.swapped_chunk_ids | {id_a, id_b},
                     exhausted=state.exhausted)


def sequential_swap(corpus, table, model, memberships, release):
    """Run up to release.swap_count sequential swaps, returning one state per
    completed swap (earliest first).

    Each step samples one pair uniformly at random from the currently valid
    pairs whose chunks have not swapped yet this run. Earlier swaps leave the
    keys, documents, and memberships of unswapped chunks untouched, so the
    valid-pair set is computed once and filtered, which is exactly equivalent
    to recomputation. Deterministic for a fixed release.seed. Stopping early
    (no pairs left) is flagged on the last state.
    """
    if model is not None and memberships is not None and len(memberships):
        if int(max(memberships)) >= model.K:
            raise ValueError("memberships refer to components the model does not have")
    if release.swap_count == 0:
        return []
    s_cats = [c for c in table.categories if release.roles.get(c) == "S"]
    pairs = sorted(valid_pairs(corpus, table, memberships, release))
    rng = random.Random(release.seed)
    state = initial_state(corpus, table)
    states = []
    for _ in range(release.swap_count):
        if not pairs:
            if states:
                states[-1] = replace_state_exhausted(states[-1])
            break
        pick = pairs[rng.randrange(len(pairs))]
        state = apply_swap(state, pick, s_cats)
        states.append(state)
        swapped = state.swapped_chunk_ids
        pairs = [p for p in pairs if p[0] not in swapped and p[1] not in swapped]
    return states


def replace_state_exhausted(state):
    return SwapState(corpus=state.corpus, table=state.table, records=state.records,
                     swapped_chunk_ids=state.swapped_chunk_ids, exhausted=True)


def suppress_category(corpus, category, placeholder):
    """Replace every entity of one category with a placeholder, corpus-wide.

    Chunks holding entities in the category get their occurrences rewritten in
    the text and their entity list collapsed to [placeholder], so the
    placeholder becomes the category's cell value; chunks with none are
    untouched. Idempotent.
    """
    if category not in corpus.categories:
        raise ValueError(f"unknown category {category!r}")
    chunks = []
    for c in corpus.chunks:
        values = c.entity_list(category)
        if not values:
            chunks.append(c)
            continue
        mapping = {v: placeholder for v in set(values) if v != placeholder}
        ents = {k: list(v) for k, v in c.entities.items()}
        ents[category] = [placeholder]
        chunks.append(replace(c, text=substitute(c.text, mapping), entities=ents))
    return Corpus(chunks=chunks, categories=list(corpus.categories), d=corpus.d)


def records_to_jsonl(records, path, summary=None):
    """Write swap records as JSON lines; optional summary line first."""
    with open(path, "w", encoding="utf-8") as fh:
        if summary is not None:
            fh.write(json.dumps({"type": "summary", **summary}, sort_keys=True) + "\n")
        for r in records:
            fh.write(json.dumps({
                "type": "swap", "chunk_a": r.chunk_a, "chunk_b": r.chunk_b,
                "category": r.category,
                "substitutions": [list(p) for p in r.substitutions],
                "leftovers": [list(p) for p in r.leftovers],
            }, sort_keys=True) + "\n")
