"""Corpus ingestion: metadata records and title/abstract sentence segmentation.

Input is the de-facto arXiv metadata snapshot shape: one JSON object per line
with ``id``, ``title``, ``abstract``, ``categories`` (space-separated),
``authors`` and a ``versions`` list carrying creation dates. Segmentation is
rule-based and deterministic; the abbreviation guard list is a plain text
file so domain-specific entries can be added.
"""

from __future__ import annotations

import gzip
import json
import re
from dataclasses import dataclass, field
from datetime import date, datetime
from email.utils import parsedate_to_datetime
from importlib import resources
from pathlib import Path
from typing import IO, Iterable

from .errors import SciConceptError


class EmptyCorpus(SciConceptError):
    """A metadata source yielded zero valid records."""


@dataclass(frozen=True)
class PaperRecord:
    """Metadata for one paper; title and abstract are whitespace-normalized."""

    paper_id: str
    title: str
    abstract: str
    authors: tuple[str, ...] = ()
    primary_category: str = ""
    categories: tuple[str, ...] = ()
    published_date: date = date(1970, 1, 1)
    updated_date: date | None = None

    def __post_init__(self) -> None:
        if not self.paper_id.strip():
            raise ValueError("paper_id is empty")
        if not self.title.strip() or not self.abstract.strip():
            raise ValueError(f"paper {self.paper_id}: empty title or abstract")
        if self.updated_date is not None and self.published_date > self.updated_date:
            raise ValueError(f"paper {self.paper_id}: published_date after updated_date")


@dataclass(frozen=True)
class Sentence:
    """One unit of text handed to the extraction pipeline; index 0 is the title."""

    paper_id: str
    index: int
    text: str


@dataclass
class LoadResult:
    """Outcome of load_metadata: parsed records plus per-line issues."""

    records: list[PaperRecord]
    skipped: int = 0
    warnings: list[str] = field(default_factory=list)


def normalize_text(text: str) -> str:
    """Collapse all whitespace runs (including hard-wrap newlines) to single spaces."""
    return " ".join(text.split())


def _parse_created(value: str) -> date:
    try:
        return parsedate_to_datetime(value).date()
    except (TypeError, ValueError):
        pass
    try:
        return datetime.fromisoformat(value.strip()[:10]).date()
    except ValueError:
        raise ValueError(f"unparseable date {value!r}") from None


def _parse_authors(payload: dict) -> tuple[str, ...]:
    parsed = payload.get("authors_parsed")
    if isinstance(parsed, list) and parsed:
        names = []
        for entry in parsed:
            if isinstance(entry, list) and entry:
                last = entry[0] or ""
                first = entry[1] if len(entry) > 1 else ""
                suffix = entry[2] if len(entry) > 2 else ""
                names.append(" ".join(part for part in (first, last, suffix) if part))
        return tuple(name for name in names if name)
    raw = payload.get("authors")
    if isinstance(raw, str) and raw.strip():
        return tuple(
            part.strip() for part in re.split(r",\s*|\s+and\s+", raw) if part.strip()
        )
    return ()


def _record_from_line(payload: dict) -> PaperRecord:
    paper_id = str(payload.get("id", "")).strip()
    title = normalize_text(str(payload.get("title", "") or ""))
    abstract = normalize_text(str(payload.get("abstract", "") or ""))
    if not paper_id:
        raise ValueError("missing id")
    if not title:
        raise ValueError("missing title")
    if not abstract:
        raise ValueError("missing abstract")
    raw_categories = payload.get("categories", "")
    if isinstance(raw_categories, list):
        categories = tuple(str(c) for c in raw_categories if str(c).strip())
    else:
        categories = tuple(str(raw_categories).split())
    versions = payload.get("versions")
    if not isinstance(versions, list) or not versions:
        raise ValueError("missing versions")
    created = [v.get("created") for v in versions if isinstance(v, dict)]
    if not created or not created[0]:
        raise ValueError("versions carry no created date")
    published = _parse_created(str(created[0]))
    updated = _parse_created(str(created[-1])) if len(created) > 1 and created[-1] else None
    return PaperRecord(
        paper_id=paper_id,
        title=title,
        abstract=abstract,
        authors=_parse_authors(payload),
        primary_category=categories[0] if categories else "",
        categories=categories,
        published_date=published,
        updated_date=updated,
    )


def _open_lines(source: str | Path | IO[str] | Iterable[str]) -> Iterable[str]:
    if isinstance(source, (str, Path)):
        path = Path(source)
        if path.suffix == ".gz":
            with gzip.open(path, "rt", encoding="utf-8") as fh:
                yield from fh
        else:
            with path.open("r", encoding="utf-8") as fh:
                yield from fh
    else:
        yield from source


def load_metadata(source: str | Path | IO[str] | Iterable[str]) -> LoadResult:
    """Load paper records from a JSON-lines metadata stream.

    Malformed lines are skipped with a warning; duplicate ids keep the last
    occurrence (upsert semantics) at the first occurrence's position. Raises
    EmptyCorpus when no line yields a valid record.
    """
    by_id: dict[str, PaperRecord] = {}
    skipped = 0
    warnings: list[str] = []
    for lineno, line in enumerate(_open_lines(source), start=1):
        if not line.strip():
            continue
        try:
            record = _record_from_line(json.loads(line))
        except (json.JSONDecodeError, ValueError, TypeError) as exc:
            skipped += 1
            warnings.append(f"line {lineno}: {exc}")
            continue
        by_id[record.paper_id] = record
    if not by_id:
        raise EmptyCorpus("no valid records in metadata source")
    return LoadResult(records=list(by_id.values()), skipped=skipped, warnings=warnings)


_DEFAULT_ABBREVIATIONS: frozenset[str] | None = None


def default_abbreviations() -> frozenset[str]:
    """Abbreviation guard tokens bundled with the package (lowercase, dot-final)."""
    global _DEFAULT_ABBREVIATIONS
    if _DEFAULT_ABBREVIATIONS is None:
        text = resources.files("sciconcept.data").joinpath("abbreviations.txt").read_text("utf-8")
        _DEFAULT_ABBREVIATIONS = frozenset(
            line.strip().lower() for line in text.splitlines() if line.strip()
        )
    return _DEFAULT_ABBREVIATIONS


def load_abbreviations(path: str | Path) -> frozenset[str]:
    """Load a guard list: one abbreviation token per line, e.g. ``et al.`` as ``al.``."""
    text = Path(path).read_text(encoding="utf-8")
    return frozenset(line.strip().lower() for line in text.splitlines() if line.strip())


_SENTENCE_PUNCT = ".!?"


def _guarded(text: str, dot_pos: int, abbreviations: frozenset[str]) -> bool:
    """True when the period at dot_pos ends an abbreviation or an initial."""
    space = text.rfind(" ", 0, dot_pos)
    token = text[space + 1 : dot_pos + 1]
    if re.fullmatch(r"[A-Za-z]\.", token):
        return True
    return token.lower() in abbreviations


def split_sentences(text: str, abbreviations: frozenset[str] | None = None) -> list[str]:
    """Split normalized text into sentences.

    Splits at ``.``, ``!`` or ``?`` followed by a space and an uppercase
    letter or digit, except after single-letter initials or guarded
    abbreviations, and never inside balanced ``()``, ``[]`` or ``$…$``. The
    worst case (unbalanced delimiters, no boundaries) is one sentence.
    Joining the result with single spaces reproduces the input.
    """
    if abbreviations is None:
        abbreviations = default_abbreviations()
    parts: list[str] = []
    start = 0
    paren = bracket = 0
    math = False
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "(":
            paren += 1
        elif ch == ")":
            paren = max(0, paren - 1)
        elif ch == "[":
            bracket += 1
        elif ch == "]":
            bracket = max(0, bracket - 1)
        elif ch == "$":
            math = not math
        elif ch in _SENTENCE_PUNCT and not (paren or bracket or math):
            j = i
            while j + 1 < n and text[j + 1] in _SENTENCE_PUNCT:
                j += 1
            k = j + 1
            if k < n and text[k] == " ":
                m = k
                while m < n and text[m] == " ":
                    m += 1
                next_starts = m < n and (text[m].isupper() or text[m].isdigit())
                blocked = ch == "." and j == i and _guarded(text, i, abbreviations)
                if next_starts and not blocked:
                    parts.append(text[start : j + 1])
                    start = m
                    i = m
                    continue
            i = j + 1
            continue
        i += 1
    tail = text[start:]
    if tail:
        parts.append(tail)
    return parts


def segment_sentences(
    record: PaperRecord, abbreviations: frozenset[str] | None = None
) -> list[Sentence]:
    """Segment a record into sentence units: index 0 is the whole title,
    followed by the abstract split into sentences."""
    texts = [record.title] + split_sentences(record.abstract, abbreviations)
    return [Sentence(record.paper_id, i, text) for i, text in enumerate(texts)]
