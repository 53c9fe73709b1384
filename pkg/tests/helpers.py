"""Shared synthetic-data builders for the test suite.

Entity names are fixed-width tokens with per-category prefixes so no pool
string is a substring of another; that keeps text substitution checks exact.
Embeddings are planted on a small number of well-separated sphere clusters.
"""

import numpy as np

from neswap.corpus import Chunk, Corpus
from neswap.mixtures import MixtureModel, assign

CATEGORIES = ["Organization", "Person", "Product", "Location"]
PREFIX = {"Organization": "Org", "Person": "Per", "Product": "Prod",
          "Location": "Loc", "Sector": "Sec"}


def entity_pool(category, size):
    return [f"{PREFIX[category]}{i:02d}" for i in range(size)]


def sphere_uniform(rng, n, d):
    X = rng.normal(size=(n, d))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def random_unit(rng, d):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def orthonormal_centers(rng, K, d):
    Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    return Q[:K].copy()


def planted_points(rng, centers, labels, noise):
    X = centers[labels] + noise * rng.normal(size=(len(labels), centers.shape[1]))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def cluster_model(centers, rho=0.8, family="pkb"):
    K = centers.shape[0]
    return MixtureModel(family=family, weights=np.full(K, 1.0 / K),
                        mus=centers.copy(), rhos=np.full(K, rho), eps=0.0)


def make_corpus(rng, n_docs=4, chunks_per_doc=6, categories=None, d=8,
                pool_size=8, n_clusters=2, noise=0.2,
                p_counts=(0.30, 0.45, 0.20, 0.05)):
    """Random corpus with Zipf-ish entity draws and 2-cluster embeddings.

    Returns (corpus, model, memberships). Entities always occur verbatim in
    the chunk text.
    """
    cats = list(categories) if categories is not None else list(CATEGORIES)
    centers = orthonormal_centers(rng, n_clusters, d)
    chunks = []
    labels = []
    for di in range(n_docs):
        doc = f"doc{di:02d}"
        for ci in range(chunks_per_doc):
            cid = f"{doc}-x{ci:02d}"
            ents = {}
            toks = []
            for cat in cats:
                k = int(rng.choice(len(p_counts), p=p_counts))
                if k:
                    pool = entity_pool(cat, pool_size)
                    w = 1.0 / (np.arange(pool_size) + 1.0)
                    w = w / w.sum()
                    picks = rng.choice(pool_size, size=k, replace=False, p=w)
                    ents[cat] = [pool[int(v)] for v in picks]
                    toks.extend(ents[cat])
            lab = int(rng.integers(n_clusters))
            labels.append(lab)
            body = " and ".join(toks) if toks else "nothing notable"
            chunks.append(Chunk(
                id=cid, doc_id=doc,
                text=f"Chunk {cid} reviews {body} today.",
                entities=ents,
                embedding=planted_points(rng, centers, np.array([lab]), noise)[0]))
    corpus = Corpus(chunks=chunks, categories=cats, d=d)
    model = cluster_model(centers)
    memberships = assign(model, corpus.embedding_matrix())
    return corpus, model, memberships


def integer_partitions(n):
    """All multisets of positive integers summing to n, as {size: count}."""
    def rec(remaining, maximum):
        if remaining == 0:
            yield []
            return
        for part in range(min(remaining, maximum), 0, -1):
            for rest in rec(remaining - part, part):
                yield [part] + rest
    for parts in rec(n, n):
        s = {}
        for p in parts:
            s[p] = s.get(p, 0) + 1
        yield s
