"""Simulated-elicitation evaluation: P@N and NDCG@N over test users,
multi-run aggregation and paired significance testing."""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

__all__ = [
    "precision_at",
    "ndcg_at",
    "evaluate_method",
    "paired_t_test",
    "aggregate_runs",
    "EvalReport",
    "write_report_table",
]

DEFAULT_NS = (10, 20, 50, 100)


def precision_at(omega, v_set, N):
    """Fraction of the top-N ranked items that are ground-truth positives."""
    if N > len(omega):
        raise ValueError(f"N={N} exceeds ranking length {len(omega)}")
    return sum(1 for item in omega[:N] if item in v_set) / N


def ndcg_at(omega, v_set, N):
    """DCG@N with binary gains and log2 discounts, normalized by the ideal
    DCG for this user (all |V| positives at the top ranks)."""
    if N > len(omega):
        raise ValueError(f"N={N} exceeds ranking length {len(omega)}")
    if not v_set:
        raise ValueError("ground-truth set is empty; caller must skip this user")
    dcg = sum(1.0 / math.log2(n + 1) for n, item in enumerate(omega[:N], start=1) if item in v_set)
    idcg = sum(1.0 / math.log2(n + 1) for n in range(1, min(N, len(v_set)) + 1))
    return dcg / idcg


def evaluate_method(predictor, matrix, split, seeds, Ns=DEFAULT_NS):
    """Simulate elicitation for every test user and score the rankings.

    For each test user: feedback z is the user's true binary ratings on the
    seed items; the ground truth is the user's positives minus the seeds.
    Users with empty ground truth are skipped (counted). `predictor` maps z
    to a ranked candidate list of length >= max(Ns) with no seed items.

    Returns {"users": [...], "P": {N: array}, "NDCG": {N: array}, "skipped": int}.
    """
    seeds = np.asarray(seeds, dtype=np.int64)
    seed_set = set(int(s) for s in seeds)
    n_max = max(Ns)
    per_user = {("P", N): [] for N in Ns}
    per_user.update({("NDCG", N): [] for N in Ns})
    users, skipped = [], 0
    for u in split.test_users:
        positives = set(int(j) for j in matrix.rows[u])
        truth = positives - seed_set
        if not truth:
            skipped += 1
            continue
        z = np.array([1.0 if int(s) in positives else 0.0 for s in seeds])
        omega = list(predictor(z))[:n_max]
        assert not seed_set.intersection(omega), "seed item leaked into a ranking"
        assert len(set(omega)) == len(omega), "duplicate item in a ranking"
        users.append(int(u))
        for N in Ns:
            per_user[("P", N)].append(precision_at(omega, truth, N))
            per_user[("NDCG", N)].append(ndcg_at(omega, truth, N))
    if not users:
        raise ValueError("every test user was skipped; evaluation is degenerate")
    return {
        "users": users,
        "P": {N: np.array(per_user[("P", N)]) for N in Ns},
        "NDCG": {N: np.array(per_user[("NDCG", N)]) for N in Ns},
        "skipped": skipped,
    }


def paired_t_test(scores_a, scores_b):
    """Two-sided paired t-test on per-user score differences."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValueError("need two equal-length 1-d score arrays with >= 2 entries")
    d = a - b
    n = len(d)
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0:
        return (math.inf if mean > 0 else -math.inf, 0.0) if mean != 0 else (0.0, 1.0)
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * stats.t.sf(abs(t), df=n - 1)
    return t, p


@dataclass
class EvalReport:
    """Per-method, per-metric, per-N means and stds over runs, plus paired
    t-tests (per-run and pooled over concatenated per-user scores)."""

    methods: list
    Ns: list
    run_seeds: list
    cells: dict = field(default_factory=dict)   # (method, metric, N) -> {"mean","std","runs"}
    tests: dict = field(default_factory=dict)   # (a, b, metric, N) -> {"per_run","pooled"}
    skipped: dict = field(default_factory=dict)  # method -> per-run skip counts

    def to_json(self):
        return json.dumps({
            "methods": self.methods,
            "Ns": list(self.Ns),
            "run_seeds": list(self.run_seeds),
            "cells": {
                f"{m}|{metric}|{N}": v for (m, metric, N), v in self.cells.items()
            },
            "tests": {
                f"{a}|{b}|{metric}|{N}": v for (a, b, metric, N), v in self.tests.items()
            },
            "skipped": self.skipped,
        }, indent=2)

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        rep = cls(methods=raw["methods"], Ns=raw["Ns"], run_seeds=raw["run_seeds"],
                  skipped=raw.get("skipped", {}))
        for key, v in raw["cells"].items():
            m, metric, N = key.split("|")
            rep.cells[(m, metric, int(N))] = v
        for key, v in raw.get("tests", {}).items():
            a, b, metric, N = key.split("|")
            rep.tests[(a, b, metric, int(N))] = v
        return rep


def aggregate_runs(run_reports, pairings=(), run_seeds=None):
    """Combine per-run evaluation tables into an EvalReport.

    run_reports: {method: [evaluate_method result, one per run]}.
    pairings: (method_a, method_b) pairs to t-test; both a per-run test and a
    pooled test over all runs' concatenated per-user scores are reported.
    """
    methods = sorted(run_reports)
    n_runs = {m: len(r) for m, r in run_reports.items()}
    if len(set(n_runs.values())) != 1:
        raise ValueError(f"inconsistent run counts across methods: {n_runs}")
    Ns = sorted(run_reports[methods[0]][0]["P"])
    report = EvalReport(methods=methods, Ns=Ns,
                        run_seeds=list(run_seeds or range(next(iter(n_runs.values())))))
    for method in methods:
        runs = run_reports[method]
        report.skipped[method] = [r["skipped"] for r in runs]
        for metric in ("P", "NDCG"):
            for N in Ns:
                means = [float(r[metric][N].mean()) for r in runs]
                report.cells[(method, metric, N)] = {
                    "mean": float(np.mean(means)),
                    "std": float(np.std(means)),
                    "runs": means,
                }
    for a, b in pairings:
        for metric in ("P", "NDCG"):
            for N in Ns:
                per_run = [
                    paired_t_test(ra[metric][N], rb[metric][N])
                    for ra, rb in zip(run_reports[a], run_reports[b])
                ]
                pooled = paired_t_test(
                    np.concatenate([r[metric][N] for r in run_reports[a]]),
                    np.concatenate([r[metric][N] for r in run_reports[b]]),
                )
                report.tests[(a, b, metric, N)] = {
                    "per_run": [[t, p] for t, p in per_run],
                    "pooled": list(pooled),
                }
    return report


def write_report_table(report, path, delimiter="\t"):
    """One row per method x metric x N: mean, std and pooled p vs. the first
    pairing partner when available."""
    p_lookup = {}
    for (a, b, metric, N), v in report.tests.items():
        p_lookup[(a, metric, N)] = v["pooled"][1]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(delimiter.join(["method", "metric", "N", "mean", "std", "p_vs_best"]) + "\n")
        for method in report.methods:
            for metric in ("P", "NDCG"):
                for N in report.Ns:
                    cell = report.cells[(method, metric, N)]
                    p = p_lookup.get((method, metric, N))
                    fh.write(delimiter.join([
                        method, metric, str(N),
                        f"{cell['mean']:.6f}", f"{cell['std']:.6f}",
                        "" if p is None else f"{p:.6g}",
                    ]) + "\n")
