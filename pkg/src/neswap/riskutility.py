"""Disclosure risk (DR), embedding utility (DU), frontiers, and sweeps.

DR is metadata-side: the fraction of estimated population uniques left intact
after swapping, via the Ewens-Pitman extrapolation of the J-marginal table.
DU is embedding-side: the ratio of conditional log-likelihoods of post- vs
pre-swap embeddings under the pre-swap mixture fit and memberships. Both are
normalized so no swapping gives (DU, DR) = (1, 1).
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import ewens, mixtures
from .contingency import build_table, frequency_counts, marginalize, sample_uniques
from .providers import EmbeddingRequest, embed
from .swapping import Release, sequential_swap, suppress_category

log = logging.getLogger("neswap.riskutility")

CSV_COLUMNS = ("J", "swap_count", "r", "DU", "DR", "seed", "N", "family", "K", "eps")


@dataclass(frozen=True)
class RiskUtilityPoint:
    release_id: str
    swap_count: int
    DU: float
    DR: float
    J: tuple
    N: float = 0.0
    seed: int = 0
    r: float = 0.0
    family: str = ""
    K: int = 0
    eps: float = 0.0

    def __post_init__(self):
        if self.swap_count < 0:
            raise ValueError("swap_count must be >= 0")
        if not (0.0 <= self.DU <= 1.0 and 0.0 <= self.DR <= 1.0):
            raise ValueError(f"DU and DR must lie in [0,1], got ({self.DU}, {self.DR})")
        if self.swap_count == 0 and (self.DU != 1.0 or self.DR != 1.0):
            raise ValueError("zero swaps must sit at (DU, DR) = (1, 1)")


@dataclass(frozen=True)
class TradeoffLine:
    a: float
    c: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("slope a must be positive")


def data_risk(pre_marginal, swapped_ids, p_hat):
    """DR = 1 - (swapped sample uniques / s1) * p_hat.

    p_hat is the estimated probability that a sample unique of the marginal is
    also a population unique; only swapping those cells reduces risk.
    """
    if not 0.0 <= p_hat <= 1.0:
        raise ValueError(f"p_hat must be in [0,1], got {p_hat}")
    counts = frequency_counts(pre_marginal)
    if counts.s1 == 0:
        raise ValueError("marginal has no sample uniques; risk measure undefined")
    hit = len(sample_uniques(pre_marginal) & set(swapped_ids))
    return 1.0 - (hit / counts.s1) * p_hat


def data_utility(model, memberships, pre_X, post_X, swapped_index_set):
    """DU = condLL(post | memberships) / condLL(pre | memberships), in [0,1].

    Uses the pre-swap model and pre-swap memberships; swapped rows keep the
    membership of their slot. post_X must differ from pre_X only on the
    swapped rows.
    """
    pre_X = np.asarray(pre_X, dtype=float)
    post_X = np.asarray(post_X, dtype=float)
    if pre_X.shape != post_X.shape:
        raise ValueError("pre_X and post_X shapes differ")
    mask = np.ones(pre_X.shape[0], dtype=bool)
    idx = sorted(int(i) for i in swapped_index_set)
    if idx and (idx[0] < 0 or idx[-1] >= pre_X.shape[0]):
        raise ValueError("swapped index out of range")
    mask[idx] = False
    if not np.array_equal(pre_X[mask], post_X[mask]):
        raise ValueError("post_X differs from pre_X outside the swapped index set")
    ll_pre = mixtures.conditional_log_likelihood(model, pre_X, memberships)
    if ll_pre == 0.0:
        raise ValueError("conditional log-likelihood of pre-swap data is 0; ratio undefined")
    ll_post = mixtures.conditional_log_likelihood(model, post_X, memberships)
    du = ll_post / ll_pre
    if du > 1.0:
        warnings.warn(f"DU = {du:.6f} exceeds 1; clamped", stacklevel=2)
        return 1.0
    if du < 0.0:
        warnings.warn(f"DU = {du:.6f} below 0; clamped", stacklevel=2)
        return 0.0
    return du


def _pointwise_cond_ll(model, X, memberships):
    l = np.asarray(memberships)
    d = X.shape[1]
    mus = model.mus[l]
    rhos = model.rhos[l]
    t = np.einsum("ij,ij->i", X, mus)
    q = np.maximum(mixtures._kernel(t, rhos), 1e-300)
    base = np.log1p(-rhos * rhos)
    if model.family == "pkb":
        return base - 0.5 * d * np.log(q)
    return (d - 1) * (base - np.log(q))


@dataclass
class PipelineContext:
    """Everything a release needs to be scored: pre-swap corpus, table, model,
    memberships, an embedding provider for re-embedding, and the population
    size N for the risk extrapolation."""

    corpus: object
    table: object
    model: object
    memberships: np.ndarray
    provider: object
    population_size: float


def _reembed(corpus_post, chunk_ids, provider):
    ids = sorted(chunk_ids)
    reqs = [EmbeddingRequest(chunk_id=c, text=corpus_post.chunk_by_id(c).text) for c in ids]
    vecs = embed(reqs, provider)
    return dict(zip(ids, vecs))


def _index_of(corpus):
    return {c.id: i for i, c in enumerate(corpus.chunks)}


def monte_carlo_measures(release, M, ctx):
    """Average (DU, DR) over M sequential-swap draws with seeds seed+0..M-1.

    Returns (mean_DU, mean_DR, draws) with draws the per-seed (DU, DR) list.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    J = sorted(release.s_categories)
    marginal = marginalize(ctx.table, J)
    counts = frequency_counts(marginal)
    if counts.s1 == 0:
        raise ValueError("marginal has no sample uniques")
    params = ewens.fit_mle(counts)
    p_hat = ewens.pop_unique_ratio(params, ctx.population_size, counts.n, counts.s1)
    pre_X = ctx.corpus.embedding_matrix()
    pos = _index_of(ctx.corpus)
    draws = []
    for m in range(M):
        rel = replace(release, seed=release.seed + m)
        traj = sequential_swap(ctx.corpus, ctx.table, ctx.model, ctx.memberships, rel)
        if traj:
            final = traj[-1]
            new_vecs = _reembed(final.corpus, final.swapped_chunk_ids, ctx.provider)
            post_X = pre_X.copy()
            for cid, v in new_vecs.items():
                post_X[pos[cid]] = v
            swapped_idx = {pos[c] for c in final.swapped_chunk_ids}
            du = data_utility(ctx.model, ctx.memberships, pre_X, post_X, swapped_idx)
            dr = data_risk(marginal, final.swapped_chunk_ids, p_hat)
        else:
            du, dr = 1.0, 1.0
        draws.append((du, dr))
    mean_du = sum(d for d, _ in draws) / M
    mean_dr = sum(r for _, r in draws) / M
    return mean_du, mean_dr, draws


def frontier(points):
    """Maximal elements under the risk-utility partial order, DU descending.

    Q dominates P iff DR_Q <= DR_P and DU_Q >= DU_P with at least one strict;
    exact duplicates do not dominate each other and all survive.
    """
    if not points:
        raise ValueError("frontier of an empty set")
    by_du = sorted(points, key=lambda p: (-p.DU, p.DR))
    out = []
    best_dr = np.inf       # min DR among strictly higher DU
    i = 0
    while i < len(by_du):
        j = i
        while j < len(by_du) and by_du[j].DU == by_du[i].DU:
            j += 1
        group = by_du[i:j]
        group_min = min(p.DR for p in group)
        if group_min < best_dr:
            out.extend(p for p in group if p.DR == group_min)
            best_dr = group_min
        i = j
    return out


def optimal_release(frontier_points, line):
    """Frontier point minimizing DR - a*DU (supporting-line tangency).

    Ties go to the higher DU, then the lower swap count; the line's offset c
    plays no role in the argmin.
    """
    if not frontier_points:
        raise ValueError("no frontier points to select from")
    return min(frontier_points,
               key=lambda p: (p.DR - line.a * p.DU, -p.DU, p.swap_count))


@dataclass
class SweepConfig:
    s_eligible: list
    subset_size: int = 2
    max_swaps: int = 30
    population_sizes: list = field(default_factory=lambda: [1e10])
    roles: dict = field(default_factory=dict)   # non-eligible category -> F/C/U
    seed: int = 0
    provider: object = None
    threads: int = 1
    family: str = ""
    K: int = 0
    eps: float = 0.0


def _sweep_one(J, corpus, model, memberships, config, pre_ll):
    """Score one category subset J; returns (points, report_entry)."""
    roles = {}
    for cat in corpus.categories:
        if cat in J:
            roles[cat] = "S"
        elif cat in config.s_eligible:
            roles[cat] = "U"
        else:
            roles[cat] = config.roles.get(cat, "U")
    cats = [c for c in corpus.categories if roles[c] in ("S", "F", "C")]
    table = build_table(corpus, cats)
    marginal = marginalize(table, list(J))
    counts = frequency_counts(marginal)
    if counts.s1 == 0:
        return [], {"status": "skipped", "reason": "no sample uniques in marginal"}
    try:
        params = ewens.fit_mle(counts)
    except (ewens.EwensFitError, ValueError) as exc:
        return [], {"status": "skipped", "reason": f"MLE failed: {exc}"}
    uniques = sample_uniques(marginal)

    release = Release(swap_count=config.max_swaps, roles=roles, seed=config.seed)
    traj = sequential_swap(corpus, table, model, memberships, release)

    pos = _index_of(corpus)
    ll_pre_total = float(pre_ll.sum())
    if ll_pre_total == 0.0:
        return [], {"status": "skipped", "reason": "pre-swap conditional log-likelihood is 0"}

    # one re-embedding serves every prefix: a chunk swaps at most once per run
    if traj:
        final = traj[-1]
        new_vecs = _reembed(final.corpus, final.swapped_chunk_ids, config.provider)
        post_ll = {}
        for cid, v in new_vecs.items():
            i = pos[cid]
            post_ll[cid] = float(_pointwise_cond_ll(
                model, v[None, :], [int(memberships[i])])[0])

    deltas, hits = [], []
    delta, hit = 0.0, 0
    prev_ids = set()
    for st in traj:
        for cid in sorted(st.swapped_chunk_ids - prev_ids):
            delta += post_ll[cid] - float(pre_ll[pos[cid]])
            if cid in uniques:
                hit += 1
        prev_ids = set(st.swapped_chunk_ids)
        deltas.append(delta)
        hits.append(hit)

    n_clamped = 0
    points = []
    for N in config.population_sizes:
        p_hat = ewens.pop_unique_ratio(params, N, counts.n, counts.s1)
        j_name = "+".join(J)
        common = dict(J=tuple(J), N=float(N), seed=config.seed,
                      family=config.family, K=config.K, eps=config.eps)
        points.append(RiskUtilityPoint(
            release_id=f"{j_name}|N={N:g}|s=0", swap_count=0, DU=1.0, DR=1.0,
            r=0.0, **common))
        for s in range(1, len(traj) + 1):
            du = (ll_pre_total + deltas[s - 1]) / ll_pre_total
            if du > 1.0 or du < 0.0:
                n_clamped += 1
                du = min(1.0, max(0.0, du))
            dr = 1.0 - (hits[s - 1] / counts.s1) * p_hat
            points.append(RiskUtilityPoint(
                release_id=f"{j_name}|N={N:g}|s={s}", swap_count=s,
                DU=float(du), DR=float(dr), r=2.0 * s / corpus.n, **common))
    report = {
        "status": "ok", "theta": params.theta, "alpha": params.alpha,
        "n": counts.n, "k": counts.k, "s1": counts.s1,
        "swaps_completed": len(traj), "requested": config.max_swaps,
        "exhausted": bool(traj and traj[-1].exhausted) or len(traj) < config.max_swaps,
        "du_clamped": n_clamped,
    }
    return points, report


def sweep(corpus, table, model, memberships, config):
    """Score every size-subset_size combination of the S-eligible categories.

    Returns (points, report): all (DU, DR) trajectory points across the N grid
    plus the per-J anchor at (1, 1), and a per-J fit report. J's whose marginal
    has no sample uniques or whose Ewens-Pitman fit fails are skipped with a
    logged reason. Table categories per J are the S, F and C roles; U
    categories are left out of the keys.
    """
    bad = [c for c in config.s_eligible if c not in corpus.categories]
    if bad:
        raise ValueError(f"S-eligible categories not in corpus: {bad}")
    if not 1 <= config.subset_size <= len(config.s_eligible):
        raise ValueError("subset_size must be between 1 and len(s_eligible)")
    if not config.population_sizes:
        raise ValueError("population_sizes must be non-empty")
    for N in config.population_sizes:
        if N < corpus.n:
            raise ValueError(f"population size {N} is smaller than the sample n={corpus.n}")

    work = corpus
    for cat, role in config.roles.items():
        if role == "C":
            work = suppress_category(work, cat, f"[{cat}]")

    pre_X = work.embedding_matrix()
    pre_ll = _pointwise_cond_ll(model, pre_X, memberships)

    subsets = list(itertools.combinations(sorted(config.s_eligible), config.subset_size))
    results = {}
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            futs = {J: pool.submit(_sweep_one, J, work, model, memberships, config, pre_ll)
                    for J in subsets}
            for J, fut in futs.items():
                results[J] = fut.result()
    else:
        for J in subsets:
            results[J] = _sweep_one(J, work, model, memberships, config, pre_ll)

    points, report = [], {}
    for J in subsets:
        pts, rep = results[J]
        if rep["status"] == "skipped":
            log.warning("skipping J=%s: %s", "+".join(J), rep["reason"])
        points.extend(pts)
        report["+".join(J)] = rep
    return points, report


def save_points_csv(points, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for p in points:
            w.writerow(["+".join(p.J), p.swap_count, p.r, p.DU, p.DR,
                        p.seed, p.N, p.family, p.K, p.eps])


def load_points_csv(path):
    points = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rd = csv.DictReader(fh)
        missing = [c for c in CSV_COLUMNS if c not in (rd.fieldnames or ())]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        for row in rd:
            J = tuple(row["J"].split("+"))
            points.append(RiskUtilityPoint(
                release_id=f"{row['J']}|N={float(row['N']):g}|s={row['swap_count']}",
                swap_count=int(row["swap_count"]), DU=float(row["DU"]), DR=float(row["DR"]),
                J=J, N=float(row["N"]), seed=int(row["seed"]), r=float(row["r"]),
                family=row["family"], K=int(row["K"]) if row["K"] else 0,
                eps=float(row["eps"]) if row["eps"] else 0.0))
    return points


def points_to_json(points):
    return [{"release_id": p.release_id, "J": list(p.J), "swap_count": p.swap_count,
             "r": p.r, "DU": p.DU, "DR": p.DR, "seed": p.seed, "N": p.N,
             "family": p.family, "K": p.K, "eps": p.eps} for p in points]
