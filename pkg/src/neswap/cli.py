"""Command-line front end for the swapping pipeline.

Subcommands: ingest, fit, sweep, select, swap, eval, report. A config file
(flat TOML-like sections) supplies defaults; every key has a command-line
override. Exit codes: 0 success, 2 input/validation error, 3 numerical
non-convergence.
"""

from __future__ import annotations

import csv
import functools
import json
import logging
import sys

import click

from . import config as config_mod
from . import ewens, mixtures, riskutility
from . import report as report_mod
from .contingency import build_table
from .corpus import (CorpusError, SuppressionRule, load_corpus, save_corpus,
                     semantic_chunk, suppress_direct_identifiers)
from .evaluation import evaluation_report, load_predictions_csv
from .providers import ProviderConfig, ProviderError
from .swapping import (Release, SwapIntegrityError, initial_state,
                       records_to_jsonl, sequential_swap, suppress_category)

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (mixtures.MixtureFitError, ewens.EwensFitError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_NUMERICAL)
        except (CorpusError, config_mod.ConfigError, ProviderError, SwapIntegrityError,
                ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_VALIDATION)
    return wrapper


def _emit(doc, path):
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        click.echo(text)


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Config file with [run]/[fit]/[sweep]/[select]/[roles] sections.")
@click.option("--seed", type=int, default=None, help="Master RNG seed.")
@click.option("--threads", type=int, default=None, help="Worker cap for the sweep.")
@click.option("--provider", "provider_kind", type=click.Choice(["stub", "cache", "http"]),
              default=None, help="Embedding provider for re-embedding swapped chunks.")
@click.option("--cache-path", default=None, help="Embedding cache file (cache provider).")
@click.option("--endpoint", default=None, help="Embedding endpoint URL (http provider).")
@click.pass_context
def main(ctx, config_path, seed, threads, provider_kind, cache_path, endpoint):
    """Anonymize a chunked corpus by swapping named entities between
    semantically similar chunks, trading disclosure risk against embedding
    utility."""
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = config_mod.parse_config(config_path) if config_path else {}
    except (config_mod.ConfigError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    run = cfg.get("run", {})
    ctx.obj = {
        "cfg": cfg,
        "seed": seed if seed is not None else int(run.get("seed", 0)),
        "seed_explicit": seed is not None,
        "threads": threads if threads is not None else int(run.get("threads", 1)),
        "provider": provider_kind or run.get("provider", "stub"),
        "cache_path": cache_path or run.get("cache_path", ""),
        "endpoint": endpoint or run.get("endpoint", ""),
    }


def _provider_config(ctx, d):
    return ProviderConfig(kind=ctx.obj["provider"], d=d,
                          endpoint=ctx.obj["endpoint"],
                          cache_path=ctx.obj["cache_path"])


def _roles_from_config(ctx):
    roles = dict(ctx.obj["cfg"].get("roles", {}))
    bad = {c: r for c, r in roles.items() if r not in ("F", "C", "U")}
    if bad:
        raise ValueError(f"[roles] entries must be F, C or U: {bad}")
    return roles


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--out", "out_path", default=None, help="Write the normalized corpus here.")
@click.option("--rules", "rules_path", default=None,
              help="JSON list of suppression rules {pattern, placeholder, ...}.")
@click.option("--stats", "stats_path", default=None, help="Write the stats report here.")
@click.option("--allow-missing-embeddings", is_flag=True,
              help="Accept chunks without embeddings (file destined for re-embedding).")
@click.option("--chunk-threshold", type=float, default=None,
              help="Sentence-file mode: split docs at this cosine-distance percentile.")
@click.pass_context
@_guard
def ingest(ctx, in_path, out_path, rules_path, stats_path, allow_missing_embeddings,
           chunk_threshold):
    """Validate an ingest file; optionally suppress direct identifiers.

    With --chunk-threshold the input is instead a sentence file
    {"sentences": [{doc_id, text, embedding}]} and the output is a JSON-lines
    chunk list ready for annotation.
    """
    if chunk_threshold is not None:
        if not out_path:
            raise ValueError("--chunk-threshold requires --out for the chunk list")
        with open(in_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        sentences = doc.get("sentences")
        if not isinstance(sentences, list) or not sentences:
            raise ValueError("sentence file needs a non-empty 'sentences' list")
        per_doc = {}
        for i, s in enumerate(sentences):
            for key in ("doc_id", "text", "embedding"):
                if key not in s:
                    raise ValueError(f"sentence #{i}: missing {key!r}")
            per_doc.setdefault(s["doc_id"], []).append(s)
        n_chunks = 0
        with open(out_path, "w", encoding="utf-8") as fh:
            for doc_id, sents in per_doc.items():
                groups = semantic_chunk([(s["text"], s["embedding"]) for s in sents],
                                        chunk_threshold)
                for gi, idxs in enumerate(groups):
                    rec = {"id": f"{doc_id}-c{gi}", "doc_id": doc_id,
                           "text": " ".join(sents[i]["text"] for i in idxs)}
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
                    n_chunks += 1
        _emit({"docs": len(per_doc), "sentences": len(sentences), "chunks": n_chunks},
              stats_path)
        return

    corpus = load_corpus(in_path, require_embeddings=not allow_missing_embeddings)
    suppressions = None
    if rules_path:
        with open(rules_path, "r", encoding="utf-8") as fh:
            raw_rules = json.load(fh)
        rules = [SuppressionRule(**r) for r in raw_rules]
        corpus, suppressions = suppress_direct_identifiers(corpus, rules)
    if out_path:
        save_corpus(corpus, out_path)
    stats = {
        "n": corpus.n, "m": corpus.m, "p": len(corpus.categories), "d": corpus.d,
        "entity_counts": {cat: sum(len(c.entity_list(cat)) for c in corpus.chunks)
                          for cat in corpus.categories},
    }
    if suppressions is not None:
        stats["suppressions"] = suppressions
    _emit(stats, stats_path)


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True)
@click.option("--trace", "trace_path", default=None, help="Write per-iteration log-likelihood CSV.")
@click.option("--family", type=click.Choice(["pkb", "scauchy"]), default=None)
@click.option("-K", "--clusters", "K", type=int, default=None)
@click.option("--eps", type=float, default=None, help="Lower bound on mixture weights.")
@click.option("--tol", type=float, default=None)
@click.option("--max-iter", type=int, default=None)
@click.pass_context
@_guard
def fit(ctx, in_path, out_path, trace_path, family, K, eps, tol, max_iter):
    """Fit the spherical mixture to the corpus embeddings."""
    fcfg = ctx.obj["cfg"].get("fit", {})
    family = family or fcfg.get("family", "pkb")
    K = K if K is not None else int(fcfg.get("K", 10))
    eps = eps if eps is not None else float(fcfg.get("eps", 1e-3))
    tol = tol if tol is not None else float(fcfg.get("tol", 1e-8))
    max_iter = max_iter if max_iter is not None else int(fcfg.get("max_iter", 300))
    corpus = load_corpus(in_path)
    X = corpus.embedding_matrix()
    model, trace = mixtures.fit_em(X, family=family, K=K, eps=eps, tol=tol,
                                   max_iter=max_iter, seed=ctx.obj["seed"])
    mixtures.save_model(model, out_path)
    if trace_path:
        with open(trace_path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "log_likelihood"])
            for i, ll in enumerate(trace):
                w.writerow([i, repr(float(ll))])
    click.echo(f"fit: family={family} K={K} iterations={len(trace)} "
               f"log-likelihood={trace[-1]:.6f}")


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, help="Sweep CSV output.")
@click.option("--report", "report_path", default=None, help="Per-J fit report JSON.")
@click.option("--points-json", default=None, help="Also write the points as JSON.")
@click.option("--s-eligible", default=None, help="Comma-separated swap-eligible categories.")
@click.option("--subset-size", type=int, default=None)
@click.option("--max-swaps", type=int, default=None)
@click.option("--population-sizes", default=None, help="Comma-separated N values.")
@click.pass_context
@_guard
def sweep(ctx, corpus_path, model_path, out_path, report_path, points_json,
          s_eligible, subset_size, max_swaps, population_sizes):
    """Score every category-subset release trajectory into a sweep CSV."""
    scfg = ctx.obj["cfg"].get("sweep", {})
    eligible = ([s.strip() for s in s_eligible.split(",") if s.strip()]
                if s_eligible else scfg.get("s_eligible"))
    if not eligible:
        raise ValueError("no S-eligible categories; pass --s-eligible or set [sweep] s_eligible")
    pop_sizes = ([float(s) for s in population_sizes.split(",")]
                 if population_sizes else [float(x) for x in scfg.get("population_sizes", [1e10])])
    corpus = load_corpus(corpus_path)
    model = mixtures.load_model(model_path)
    memberships = mixtures.assign(model, corpus.embedding_matrix())
    sweep_cfg = riskutility.SweepConfig(
        s_eligible=list(eligible),
        subset_size=subset_size if subset_size is not None else int(scfg.get("subset_size", 2)),
        max_swaps=max_swaps if max_swaps is not None else int(scfg.get("max_swaps", 30)),
        population_sizes=pop_sizes,
        roles=_roles_from_config(ctx),
        seed=ctx.obj["seed"],
        provider=_provider_config(ctx, corpus.d),
        threads=ctx.obj["threads"],
        family=model.family, K=model.K, eps=model.eps,
    )
    table = build_table(corpus)
    points, rep = riskutility.sweep(corpus, table, model, memberships, sweep_cfg)
    riskutility.save_points_csv(points, out_path)
    if points_json:
        _emit(riskutility.points_to_json(points), points_json)
    if report_path:
        _emit(rep, report_path)
    ok = [j for j, r in rep.items() if r["status"] == "ok"]
    skipped = {j: r["reason"] for j, r in rep.items() if r["status"] == "skipped"}
    for j, reason in skipped.items():
        click.echo(f"skipped {j}: {reason}", err=True)
    click.echo(f"sweep: {len(points)} points over {len(ok)} of {len(rep)} category subsets")
    if not ok:
        click.echo("error: every category subset failed", err=True)
        sys.exit(EXIT_NUMERICAL)


@main.command()
@click.option("--sweep", "sweep_path", required=True, type=click.Path())
@click.option("-a", "slope", type=float, default=None, help="Trade-off slope (> 0).")
@click.option("-c", "offset", type=float, default=None, help="Trade-off offset.")
@click.option("--population-size", "pop_n", type=float, default=None,
              help="Restrict to one N when the CSV holds several.")
@click.option("--out", "out_path", default=None)
@click.pass_context
@_guard
def select(ctx, sweep_path, slope, offset, pop_n, out_path):
    """Pick the optimal release from a sweep CSV under a linear trade-off."""
    sel = ctx.obj["cfg"].get("select", {})
    a = slope if slope is not None else sel.get("a")
    if a is None:
        raise ValueError("trade-off slope required: pass -a or set [select] a")
    c = offset if offset is not None else float(sel.get("c", 0.0))
    points = riskutility.load_points_csv(sweep_path)
    if not points:
        raise ValueError(f"{sweep_path}: no rows")
    ns = sorted({p.N for p in points})
    if pop_n is not None:
        points = [p for p in points if p.N == pop_n]
        if not points:
            raise ValueError(f"no rows with N = {pop_n:g}; present: {ns}")
    elif len(ns) > 1:
        raise ValueError(f"sweep holds several population sizes {ns}; pass --population-size")
    front = riskutility.frontier(points)
    best = riskutility.optimal_release(front, riskutility.TradeoffLine(a=float(a), c=c))
    _emit({
        "J": list(best.J), "swap_count": best.swap_count, "seed": best.seed,
        "N": best.N, "DU": best.DU, "DR": best.DR, "r": best.r,
        "family": best.family, "K": best.K, "eps": best.eps,
        "tradeoff": {"a": float(a), "c": c}, "frontier_size": len(front),
    }, out_path)


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--release", "release_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, help="Post-swap corpus JSON.")
@click.option("--log", "log_path", default=None, help="Swap record JSON lines.")
@click.pass_context
@_guard
def swap(ctx, corpus_path, model_path, release_path, out_path, log_path):
    """Apply the selected release: run the sequential swaps and export."""
    corpus = load_corpus(corpus_path)
    model = mixtures.load_model(model_path)
    with open(release_path, "r", encoding="utf-8") as fh:
        rel_doc = json.load(fh)
    J = rel_doc["J"]
    swap_count = int(rel_doc["swap_count"])
    seed = ctx.obj["seed"] if ctx.obj["seed_explicit"] else int(rel_doc.get("seed", ctx.obj["seed"]))
    cfg_roles = _roles_from_config(ctx)
    roles = {}
    for cat in corpus.categories:
        roles[cat] = "S" if cat in J else cfg_roles.get(cat, "U")
    for cat, role in roles.items():
        if role == "C":
            corpus = suppress_category(corpus, cat, f"[{cat}]")
    cats = [c for c in corpus.categories if roles[c] in ("S", "F", "C")]
    table = build_table(corpus, cats)
    memberships = mixtures.assign(model, corpus.embedding_matrix())
    release = Release(swap_count=swap_count, roles=roles, seed=seed)
    traj = sequential_swap(corpus, table, model, memberships, release)
    final = traj[-1] if traj else initial_state(corpus, table)
    save_corpus(final.corpus, out_path, omit_embeddings_for=final.swapped_chunk_ids)
    summary = {"requested": swap_count, "completed": len(traj),
               "swapped_chunks": len(final.swapped_chunk_ids),
               "exhausted": len(traj) < swap_count, "seed": seed, "J": list(J)}
    if log_path:
        records_to_jsonl(final.records, log_path, summary=summary)
    if len(traj) < swap_count:
        click.echo(f"warning: ran out of swappable pairs after {len(traj)} of "
                   f"{swap_count} swaps", err=True)
    click.echo(f"swap: completed {len(traj)} swaps touching "
               f"{len(final.swapped_chunk_ids)} chunks")


@main.command(name="eval")
@click.argument("csvs", nargs=-1, required=True, type=click.Path())
@click.option("--out", "out_path", default=None)
@click.pass_context
@_guard
def eval_cmd(ctx, csvs, out_path):
    """Score prediction CSVs (chunk_id, predicted, truth, condition, run)."""
    sets = load_predictions_csv(list(csvs))
    if not sets:
        raise ValueError("no predictions found")
    _emit(evaluation_report(sets), out_path)


@main.command(name="report")
@click.option("--sweep", "sweep_path", required=True, type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--trace", "trace_path", default=None, help="fit trace CSV to render too.")
@click.pass_context
@_guard
def report_cmd(ctx, sweep_path, out_dir, trace_path):
    """Render risk-utility figures (and optionally the fit trace) to files."""
    points = riskutility.load_points_csv(sweep_path)
    files = report_mod.render_sweep_figures(points, out_dir)
    if trace_path:
        with open(trace_path, "r", encoding="utf-8", newline="") as fh:
            rd = csv.DictReader(fh)
            trace = [float(row["log_likelihood"]) for row in rd]
        import os
        files.append(report_mod.render_trace_figure(
            trace, os.path.join(out_dir, "fit_trace.png")))
    for f in files:
        click.echo(f)


if __name__ == "__main__":
    main()
