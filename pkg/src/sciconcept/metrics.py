"""Exact-match evaluation: per-paper precision/recall/F1 and dev-set aggregates.

A predicted item matches a gold item iff the (tag, normalized surface) pairs
are equal, where normalization is case-fold plus whitespace-collapse —
nothing softer, so scores stay strict. Aggregation is per paper: counts are
summed across a paper's sentences, PRF computed per paper, then mean and
sample standard deviation reported across papers.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .annotations import ExtractionSet, ResponseFormat
from .errors import SciConceptError
from .prompting import GoldPaper
from .schema import TagType


class AlignmentError(SciConceptError):
    """Predictions do not line up with the gold sentences for a paper."""

    def __init__(self, paper_id: str, reason: str):
        super().__init__(f"paper {paper_id}: {reason}")
        self.paper_id = paper_id


@dataclass(frozen=True)
class MatchCounts:
    """True positives, false positives, false negatives for one comparison."""

    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        return MatchCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class PRF:
    """Precision/recall/F1 with explicit flags for degenerate denominators."""

    precision: float
    recall: float
    f1: float
    precision_undefined: bool = False
    recall_undefined: bool = False


def _norm_key(tag: TagType, surface: str) -> tuple[TagType, str]:
    return (tag, " ".join(surface.casefold().split()))


def match_exact(pred: ExtractionSet, gold: ExtractionSet) -> MatchCounts:
    """Count exact matches between predicted and gold extraction sets."""
    pred_keys = {_norm_key(e.tag, e.surface) for e in pred}
    gold_keys = {_norm_key(e.tag, e.surface) for e in gold}
    tp = len(pred_keys & gold_keys)
    return MatchCounts(tp=tp, fp=len(pred_keys) - tp, fn=len(gold_keys) - tp)


def prf(counts: MatchCounts) -> PRF:
    """Precision/recall/F1 from match counts; undefined ratios report 0 with a flag."""
    p_undef = counts.tp + counts.fp == 0
    r_undef = counts.tp + counts.fn == 0
    precision = 0.0 if p_undef else counts.tp / (counts.tp + counts.fp)
    recall = 0.0 if r_undef else counts.tp / (counts.tp + counts.fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return PRF(precision, recall, f1, precision_undefined=p_undef, recall_undefined=r_undef)


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    if not values:
        return 0.0, 0.0
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


@dataclass
class DevReport:
    """Per-paper PRF plus mean ± sample std aggregates over a development set."""

    per_paper: list[tuple[str, PRF]]
    precision_mean: float
    precision_std: float
    recall_mean: float
    recall_std: float
    f1_mean: float
    f1_std: float
    latency_mean: float | None = None
    latency_std: float | None = None
    format: ResponseFormat | None = None
    run_id: str = ""
    counts: MatchCounts = field(default_factory=MatchCounts)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "format": str(self.format) if self.format else None,
            "papers": [
                {
                    "paper_id": paper_id,
                    "precision": scores.precision,
                    "recall": scores.recall,
                    "f1": scores.f1,
                    "precision_undefined": scores.precision_undefined,
                    "recall_undefined": scores.recall_undefined,
                }
                for paper_id, scores in self.per_paper
            ],
            "precision": {"mean": self.precision_mean, "std": self.precision_std},
            "recall": {"mean": self.recall_mean, "std": self.recall_std},
            "f1": {"mean": self.f1_mean, "std": self.f1_std},
            "latency_seconds": None
            if self.latency_mean is None
            else {"mean": self.latency_mean, "std": self.latency_std},
            "totals": {"tp": self.counts.tp, "fp": self.counts.fp, "fn": self.counts.fn},
        }

    def to_text(self) -> str:
        """Aligned plain-text table: one row per paper plus the aggregate row."""
        rows = [("paper", "precision", "recall", "f1")]
        for paper_id, scores in self.per_paper:
            rows.append(
                (paper_id, f"{scores.precision:.3f}", f"{scores.recall:.3f}", f"{scores.f1:.3f}")
            )
        rows.append(
            (
                "mean±std",
                f"{self.precision_mean:.3f}±{self.precision_std:.3f}",
                f"{self.recall_mean:.3f}±{self.recall_std:.3f}",
                f"{self.f1_mean:.3f}±{self.f1_std:.3f}",
            )
        )
        widths = [max(len(row[col]) for row in rows) for col in range(4)]
        return "\n".join(
            "  ".join(cell.ljust(width) for cell, width in zip(row, widths)) for row in rows
        )


def evaluate_dev(
    predictions: Mapping[str, Sequence[ExtractionSet]],
    gold: Sequence[GoldPaper],
    latencies: Sequence[float] = (),
    *,
    format: ResponseFormat | None = None,
    run_id: str = "",
) -> DevReport:
    """Score per-sentence predictions against gold papers.

    ``predictions`` maps paper_id to one ExtractionSet per sentence, aligned
    by index with the paper's gold sentences; a count mismatch or a missing
    paper raises AlignmentError.
    """
    per_paper: list[tuple[str, PRF]] = []
    totals = MatchCounts()
    for paper in gold:
        if paper.paper_id not in predictions:
            raise AlignmentError(paper.paper_id, "no predictions for paper")
        predicted = predictions[paper.paper_id]
        if len(predicted) != len(paper.sentences):
            raise AlignmentError(
                paper.paper_id,
                f"{len(predicted)} predicted sentence sets vs {len(paper.sentences)} gold sentences",
            )
        counts = MatchCounts()
        for pred_set, (_, gold_set) in zip(predicted, paper.sentences):
            counts = counts + match_exact(pred_set, gold_set)
        totals = totals + counts
        per_paper.append((paper.paper_id, prf(counts)))

    p_mean, p_std = _mean_std([scores.precision for _, scores in per_paper])
    r_mean, r_std = _mean_std([scores.recall for _, scores in per_paper])
    f_mean, f_std = _mean_std([scores.f1 for _, scores in per_paper])
    if latencies:
        lat_mean, lat_std = _mean_std(list(latencies))
    else:
        lat_mean = lat_std = None
    return DevReport(
        per_paper=per_paper,
        precision_mean=p_mean,
        precision_std=p_std,
        recall_mean=r_mean,
        recall_std=r_std,
        f1_mean=f_mean,
        f1_std=f_std,
        latency_mean=lat_mean,
        latency_std=lat_std,
        format=format,
        run_id=run_id,
        counts=totals,
    )
