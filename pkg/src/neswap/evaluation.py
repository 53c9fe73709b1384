"""Scoring externally produced metadata predictions, pre- vs post-swap.

Predictions (e.g. an LLM guessing each chunk's source company) are compared
against truth per chunk; pre/post pairs of the same chunks feed McNemar's
paired test of marginal accuracy change.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from scipy.stats import binomtest, chi2

CONDITIONS = ("pre", "post")


def normalize_label(label):
    """Trim and uppercase; predictions are short symbols, case is noise."""
    return label.strip().upper()


@dataclass(frozen=True)
class PredictionSet:
    entries: tuple          # ((chunk_id, predicted, truth), ...)
    condition: str
    run_index: int = 0

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValueError(f"condition must be one of {CONDITIONS}")
        ids = [e[0] for e in self.entries]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate chunk ids in prediction set: {dupes[:5]}")

    def correct_ids(self):
        return {cid for cid, pred, truth in self.entries
                if normalize_label(pred) == normalize_label(truth)}


@dataclass(frozen=True)
class PairedTable:
    a: int          # both correct
    b: int          # pre correct, post wrong
    c: int          # pre wrong, post correct
    d: int          # both wrong

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("cell counts must be non-negative")

    @property
    def total(self):
        return self.a + self.b + self.c + self.d

    def __add__(self, other):
        return PairedTable(self.a + other.a, self.b + other.b,
                           self.c + other.c, self.d + other.d)


def accuracy(preds):
    """Fraction of entries whose prediction matches truth after normalization."""
    if not preds.entries:
        raise ValueError("empty prediction set")
    return len(preds.correct_ids()) / len(preds.entries)


def pair_predictions(pre, post):
    """Cross-tabulate per-chunk correctness of the two conditions."""
    ids_pre = {e[0] for e in pre.entries}
    ids_post = {e[0] for e in post.entries}
    if ids_pre != ids_post:
        diff = sorted(ids_pre ^ ids_post)
        raise ValueError(f"prediction sets cover different chunks: {diff[:10]}"
                         + (" ..." if len(diff) > 10 else ""))
    ok_pre = pre.correct_ids()
    ok_post = post.correct_ids()
    a = len(ok_pre & ok_post)
    b = len(ok_pre - ok_post)
    c = len(ok_post - ok_pre)
    d = len(ids_pre) - a - b - c
    return PairedTable(a=a, b=b, c=c, d=d)


def mcnemar(table):
    """McNemar's test on the discordant cells.

    Returns (chi_square, p_value, exact_p): the chi-square statistic
    (b-c)^2/(b+c) without continuity correction with its df=1 upper-tail p,
    plus the exact two-sided binomial p for b successes in b+c trials at 1/2.
    """
    b, c = table.b, table.c
    if b + c == 0:
        raise ValueError("no discordant pairs; McNemar's test undefined")
    stat = (b - c) ** 2 / (b + c)
    p = float(chi2.sf(stat, df=1))
    exact = float(binomtest(b, b + c, 0.5, alternative="two-sided").pvalue)
    return stat, p, exact


def save_predictions_csv(sets, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chunk_id", "predicted", "truth", "condition", "run"])
        for ps in sets:
            for cid, pred, truth in ps.entries:
                w.writerow([cid, pred, truth, ps.condition, ps.run_index])


def load_predictions_csv(paths):
    """Read one or more prediction CSVs into PredictionSets grouped by
    (condition, run)."""
    rows = []
    for path in paths:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rd = csv.DictReader(fh)
            need = {"chunk_id", "predicted", "truth", "condition", "run"}
            have = set(rd.fieldnames or ())
            if not need <= have:
                raise ValueError(f"{path}: missing columns {sorted(need - have)}")
            for row in rd:
                rows.append(row)
    groups = {}
    for row in rows:
        key = (row["condition"], int(row["run"]))
        groups.setdefault(key, []).append(
            (row["chunk_id"], row["predicted"], row["truth"]))
    return [PredictionSet(entries=tuple(v), condition=k[0], run_index=k[1])
            for k, v in sorted(groups.items())]


def evaluation_report(sets):
    """Accuracies per condition (mean and sd over runs when > 1), the summed
    per-run paired table, and McNemar statistics."""
    by_cond = {"pre": {}, "post": {}}
    for ps in sets:
        by_cond[ps.condition][ps.run_index] = ps
    report = {"accuracy": {}}
    for cond in CONDITIONS:
        runs = by_cond[cond]
        if not runs:
            continue
        accs = [accuracy(runs[r]) for r in sorted(runs)]
        entry = {"runs": len(accs), "mean": sum(accs) / len(accs)}
        if len(accs) > 1:
            m = entry["mean"]
            entry["sd"] = (sum((x - m) ** 2 for x in accs) / (len(accs) - 1)) ** 0.5
        report["accuracy"][cond] = entry
    shared = sorted(set(by_cond["pre"]) & set(by_cond["post"]))
    if shared:
        total = PairedTable(0, 0, 0, 0)
        for r in shared:
            total = total + pair_predictions(by_cond["pre"][r], by_cond["post"][r])
        report["paired_table"] = {"a": total.a, "b": total.b, "c": total.c,
                                  "d": total.d, "total": total.total}
        stat, p, exact = mcnemar(total)
        report["mcnemar"] = {"chi_square": stat, "p_value": p, "exact_p": exact}
    return report
