"""RAKE keyword extraction and count/type comparisons against tagged concepts.

Candidate phrases are maximal word runs containing neither stopwords nor
punctuation (hyphens and apostrophes count as punctuation, numbers count as
words). Each word scores degree/frequency over all candidate occurrences and
a phrase scores the sum of its word scores. The bundled stopword list is the
standard English list shipped with the common NLP toolkit; score
reproduction depends on that exact list, so it is vendored as a data file.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .annotations import ExtractionSet
from .errors import SciConceptError
from .schema import TAG_ORDER, TagType


class DomainMismatch(SciConceptError):
    """The two sides of a comparison do not cover the same papers."""


class EmptyInput(SciConceptError):
    """A distribution was requested over zero rows."""


@dataclass(frozen=True)
class RakeKeyword:
    """A scored candidate phrase and how often it occurs in the document."""

    phrase: str
    score: float
    count: int


@dataclass(frozen=True)
class ComparisonRow:
    """Per-domain average concept counts for RAKE vs the tagged extractions."""

    domain: str
    rake_avg: float
    ours_avg: float
    ratio: float | None


@dataclass(frozen=True)
class TagDistribution:
    """Percentage of rows per tag within one domain; nine entries summing to 100."""

    domain: str
    percentages: dict[TagType, float]


_STOPWORDS: frozenset[str] | None = None

_WORD_SPLIT = re.compile(r"[^\w\s]+")


def default_stopwords() -> frozenset[str]:
    """The vendored English stopword list."""
    global _STOPWORDS
    if _STOPWORDS is None:
        text = resources.files("sciconcept.data").joinpath("stopwords_en.txt").read_text("utf-8")
        _STOPWORDS = frozenset(line.strip() for line in text.splitlines() if line.strip())
    return _STOPWORDS


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Load a stopword list, one lowercase token per line."""
    text = Path(path).read_text(encoding="utf-8")
    return frozenset(line.strip().lower() for line in text.splitlines() if line.strip())


def _candidate_phrases(text: str, stopwords: frozenset[str]) -> list[tuple[str, ...]]:
    phrases: list[tuple[str, ...]] = []
    for segment in _WORD_SPLIT.split(text.lower()):
        run: list[str] = []
        for word in segment.split():
            if word in stopwords:
                if run:
                    phrases.append(tuple(run))
                    run = []
            else:
                run.append(word)
        if run:
            phrases.append(tuple(run))
    return phrases


def word_scores(text: str, stopwords: frozenset[str] | None = None) -> dict[str, float]:
    """Per-word degree/frequency scores; exposed so phrase scores can be re-derived."""
    if stopwords is None:
        stopwords = default_stopwords()
    freq: Counter[str] = Counter()
    degree: Counter[str] = Counter()
    for phrase in _candidate_phrases(text, stopwords):
        for word in phrase:
            freq[word] += 1
            degree[word] += len(phrase)
    return {word: degree[word] / freq[word] for word in freq}


def rake_extract(text: str, stopwords: frozenset[str] | None = None) -> list[RakeKeyword]:
    """Extract scored keyword phrases from a document.

    Identical phrases are aggregated with their occurrence count; output is
    sorted by descending score, ties broken lexicographically.
    """
    if stopwords is None:
        stopwords = default_stopwords()
    if not stopwords:
        raise ValueError("stopword set is empty")
    phrases = _candidate_phrases(text, stopwords)
    scores = word_scores(text, stopwords)
    occurrences = Counter(" ".join(phrase) for phrase in phrases)
    keywords = [
        RakeKeyword(phrase=joined, score=sum(scores[w] for w in joined.split()), count=count)
        for joined, count in occurrences.items()
    ]
    keywords.sort(key=lambda kw: (-kw.score, kw.phrase))
    return keywords


def paper_concept_count(sets: Iterable[ExtractionSet]) -> int:
    """Distinct tagged concepts in one paper after per-paper dedup."""
    merged = ExtractionSet(item for group in sets for item in group)
    return len(merged)


def compare_counts(
    rake_results: Mapping[str, Sequence[RakeKeyword]],
    schema_results: Mapping[str, Iterable[ExtractionSet]],
    domains: Mapping[str, str],
) -> list[ComparisonRow]:
    """Average per-paper concept counts per domain, plus an overall row.

    RAKE counts include phrase multiplicity (the sum of occurrence counts);
    tagged counts are distinct concepts after per-paper dedup. Both mappings
    and the domain assignment must cover the same paper ids.
    """
    if set(rake_results) != set(schema_results):
        raise DomainMismatch("rake and tagged results cover different papers")
    missing = set(rake_results) - set(domains)
    if missing:
        raise DomainMismatch(f"papers without a domain: {sorted(missing)[:5]}")

    rake_counts = {
        paper_id: sum(kw.count for kw in keywords) for paper_id, keywords in rake_results.items()
    }
    ours_counts = {
        paper_id: paper_concept_count(sets) for paper_id, sets in schema_results.items()
    }
    buckets: dict[str, list[str]] = {}
    for paper_id in rake_results:
        buckets.setdefault(domains[paper_id], []).append(paper_id)

    def row(domain: str, paper_ids: Sequence[str]) -> ComparisonRow:
        rake_avg = sum(rake_counts[p] for p in paper_ids) / len(paper_ids)
        ours_avg = sum(ours_counts[p] for p in paper_ids) / len(paper_ids)
        ratio = rake_avg / ours_avg if ours_avg > 0 else None
        return ComparisonRow(domain=domain, rake_avg=rake_avg, ours_avg=ours_avg, ratio=ratio)

    rows = [row(domain, ids) for domain, ids in sorted(buckets.items())]
    rows.append(row("overall", list(rake_results)))
    return rows


def tag_distribution(tags: Iterable[TagType | str], domain: str = "") -> TagDistribution:
    """Percentage of rows per tag over all rows in a domain."""
    counts: Counter[TagType] = Counter()
    for tag in tags:
        counts[TagType(tag)] += 1
    total = sum(counts.values())
    if total == 0:
        raise EmptyInput(f"no prediction rows for domain {domain!r}")
    percentages = {tag: 100.0 * counts.get(tag, 0) / total for tag in TAG_ORDER}
    return TagDistribution(domain=domain, percentages=percentages)
