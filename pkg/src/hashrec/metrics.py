"""Top-K ranking metrics, corpus aggregation, K-sweeps and ablations.

Conventions (recorded in every report header): precision denominator
is K; F1 is the per-post harmonic mean, macro-averaged over posts;
hit@K is 1 when at least one ground-truth tag appears in the top K.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus
from .errors import ValidationError
from .graph import InteractionGraph
from .model import Inferencer, ModelParameters

log = logging.getLogger(__name__)

REPORT_HEADER_NOTE = "precision=c/K; recall=c/|G|; f1=harmonic, macro-averaged"


@dataclass
class MetricsRow:
    k: int
    hit_rate: float
    precision: float
    recall: float
    f1: float
    posts: int


@dataclass
class MetricsReport:
    rows: list[MetricsRow] = field(default_factory=list)
    per_post: list[dict] = field(default_factory=list)

    def row(self, k: int) -> MetricsRow:
        for r in self.rows:
            if r.k == k:
                return r
        raise KeyError(k)

    def write_csv(self, path: str | Path, config: str = "default",
                  seed: int = 0) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            f.write(f"# {REPORT_HEADER_NOTE}\n")
            writer = csv.writer(f)
            writer.writerow(["config", "seed", "K", "hit", "precision",
                             "recall", "f1"])
            for r in self.rows:
                writer.writerow([config, seed, r.k,
                                 f"{r.hit_rate:.6f}", f"{r.precision:.6f}",
                                 f"{r.recall:.6f}", f"{r.f1:.6f}"])


def post_metrics(ground_truth: set[int] | frozenset[int], ranked: list[int],
                 k: int) -> tuple[float, float, float, float]:
    """(hit, precision, recall, f1) for one post at cutoff K."""
    if not ground_truth:
        raise ValidationError("empty ground-truth set")
    top = ranked[:k]
    c = len(set(top) & set(ground_truth))
    hit = 1.0 if c >= 1 else 0.0
    p = c / k
    r = c / len(ground_truth)
    f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    return hit, p, r, f1


def corpus_metrics(posts: list[tuple[set[int] | frozenset[int], list[int]]],
                   k: int) -> MetricsRow:
    """Arithmetic mean of each per-post metric."""
    if not posts:
        raise ValidationError("no evaluated posts")
    sums = [0.0, 0.0, 0.0, 0.0]
    for g, ranked in posts:
        vals = post_metrics(g, ranked, k)
        for i in range(4):
            sums[i] += vals[i]
    n = len(posts)
    return MetricsRow(k=k, hit_rate=sums[0] / n, precision=sums[1] / n,
                      recall=sums[2] / n, f1=sums[3] / n, posts=n)


def rank_test_posts(params: ModelParameters, graph: InteractionGraph,
                    corpus: Corpus, k_max: int,
                    cold_social: bool = True,
                    ) -> list[tuple[frozenset[int], list[int]]]:
    """Rankings for the held-out split via inductive inference."""
    inf = Inferencer(params, graph, corpus, cold_social=cold_social)
    out = []
    for rec in corpus.test_records():
        pred = inf.infer(rec, rec.user_id, k=k_max)
        out.append((rec.hashtags, pred.ranked))
    return out


def rank_cold_posts(params: ModelParameters, graph: InteractionGraph,
                    corpus: Corpus, cold_records, k_max: int,
                    cold_social: bool = True,
                    ) -> list[tuple[frozenset[int], list[int]]]:
    """Rankings for a cold-start cohort held out of training entirely."""
    inf = Inferencer(params, graph, corpus, cold_social=cold_social)
    out = []
    for rec in cold_records:
        pred = inf.infer(rec, rec.user_id, k=k_max, cold_start=True)
        out.append((rec.hashtags, pred.ranked))
    return out


def k_sweep(ranked_posts: list[tuple[frozenset[int], list[int]]],
            k_min: int = 1, k_max: int = 9) -> MetricsReport:
    """One metrics row per K over a shared set of rankings."""
    report = MetricsReport()
    for k in range(k_min, k_max + 1):
        report.rows.append(corpus_metrics(ranked_posts, k))
    return report


def evaluate(params: ModelParameters, graph: InteractionGraph, corpus: Corpus,
             k: int = 5) -> MetricsRow:
    ranked = rank_test_posts(params, graph, corpus, k_max=k)
    return corpus_metrics(ranked, k)
