"""Annotation surfaces: inline ``<tag>…</tag>`` markup and model response formats.

Three text shapes live here: gold sentences with inline tag markup (possibly
nested), human-readable ``tag: item, item`` response blocks, and JSON object
responses. Markup parsing is strict (gold files should fail loudly); response
parsing is tolerant and never raises on arbitrary model output.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator

from .errors import SciConceptError
from .schema import TagType, UnknownTag, tag_from_label, tag_rank


class MalformedMarkup(SciConceptError):
    """Inline tag markup is not well-formed (unclosed, crossing, or empty spans)."""

    def __init__(self, position: int, reason: str):
        super().__init__(f"at offset {position}: {reason}")
        self.position = position
        self.reason = reason


class UnrepresentableItem(SciConceptError):
    """A surface cannot be written in the requested response format."""

    def __init__(self, surface: str):
        super().__init__(
            f"surface {surface!r} contains a comma and cannot be rendered "
            "in the human-readable format; use the json format"
        )
        self.surface = surface


class NoParsableContent(SciConceptError):
    """Strict-mode parse found neither extractions nor recognizable structure."""


class ResponseFormat(str, Enum):
    """Wire format for extraction lists exchanged with the model."""

    human_readable = "human"
    json = "json"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Extraction:
    """One tagged concept: a tag and the verbatim surface string."""

    tag: TagType
    surface: str

    def __post_init__(self) -> None:
        if isinstance(self.tag, str) and not isinstance(self.tag, TagType):
            object.__setattr__(self, "tag", tag_from_label(self.tag))
        surface = self.surface.strip()
        if not surface:
            raise ValueError("extraction surface is empty")
        if "\n" in surface or "\r" in surface:
            raise ValueError(f"extraction surface contains a newline: {surface!r}")
        object.__setattr__(self, "surface", surface)

    def key(self) -> tuple[TagType, str]:
        """Dedup key: tag plus case-folded surface."""
        return (self.tag, self.surface.casefold())


class ExtractionSet:
    """Ordered collection of extractions, deduplicated by (tag, case-folded surface).

    The first spelling of a duplicated surface wins. Equality ignores order:
    two sets are equal when they contain the same (tag, surface) pairs.
    """

    __slots__ = ("items",)

    def __init__(self, items: Iterable[Extraction] = ()):
        seen: set[tuple[TagType, str]] = set()
        kept: list[Extraction] = []
        for item in items:
            key = item.key()
            if key in seen:
                continue
            seen.add(key)
            kept.append(item)
        self.items: tuple[Extraction, ...] = tuple(kept)

    def __iter__(self) -> Iterator[Extraction]:
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)

    def __bool__(self) -> bool:
        return bool(self.items)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExtractionSet):
            return NotImplemented
        return self._pairs() == other._pairs()

    def __hash__(self) -> int:
        return hash(self._pairs())

    def __repr__(self) -> str:
        inner = ", ".join(f"{e.tag.value}: {e.surface!r}" for e in self.items)
        return f"ExtractionSet({inner})"

    def _pairs(self) -> frozenset[tuple[TagType, str]]:
        return frozenset((e.tag, e.surface) for e in self.items)

    def by_tag(self) -> dict[TagType, list[str]]:
        """Group surfaces by tag, tags in canonical order, items in first-seen order."""
        grouped: dict[TagType, list[str]] = {}
        for item in sorted(self.items, key=lambda e: tag_rank(e.tag)):
            grouped.setdefault(item.tag, []).append(item.surface)
        return grouped


@dataclass(frozen=True)
class TagSpan:
    """One markup span in plain-text coordinates, ordered by open-tag position."""

    tag: TagType
    start: int
    end: int


@dataclass(frozen=True)
class TaggedSentence:
    """Result of parsing inline markup: original text, untagged text, spans, extractions."""

    raw: str
    plain: str
    spans: tuple[TagSpan, ...]
    extractions: ExtractionSet


_TAG_TOKEN = re.compile(r"<(/?)([A-Za-z][A-Za-z0-9_-]*)>")
_CANONICAL_TAGS = {tag.value for tag in TagType}


def parse_tagged(raw: str) -> TaggedSentence:
    """Parse a sentence with inline ``<tag>…</tag>`` markup.

    Spans may nest; each span yields one extraction whose surface is the
    span's inner text with nested markup stripped. Extractions appear in
    document order (outer before inner, by open-tag position). Markup must be
    well-formed: tags are the nine lowercase names, every open tag has a
    properly nested close, and spans are non-empty.
    """
    plain_parts: list[str] = []
    plain_len = 0
    open_spans: list[dict] = []
    stack: list[int] = []
    pos = 0
    for match in _TAG_TOKEN.finditer(raw):
        between = raw[pos : match.start()]
        plain_parts.append(between)
        plain_len += len(between)
        closing, name = match.group(1), match.group(2)
        if name not in _CANONICAL_TAGS:
            raise UnknownTag(name)
        tag = TagType(name)
        if not closing:
            stack.append(len(open_spans))
            open_spans.append({"tag": tag, "start": plain_len, "end": None, "pos": match.start()})
        else:
            if not stack:
                raise MalformedMarkup(match.start(), f"</{name}> without a matching open tag")
            idx = stack.pop()
            if open_spans[idx]["tag"] is not tag:
                raise MalformedMarkup(
                    match.start(),
                    f"</{name}> closes <{open_spans[idx]['tag'].value}> (crossing or mismatched tags)",
                )
            open_spans[idx]["end"] = plain_len
        pos = match.end()
    plain_parts.append(raw[pos:])
    plain = "".join(plain_parts)
    if stack:
        first = open_spans[stack[0]]
        raise MalformedMarkup(first["pos"], f"<{first['tag'].value}> is never closed")

    spans: list[TagSpan] = []
    extractions: list[Extraction] = []
    for span in open_spans:
        surface = plain[span["start"] : span["end"]]
        if not surface.strip():
            raise MalformedMarkup(span["pos"], f"empty <{span['tag'].value}> span")
        spans.append(TagSpan(span["tag"], span["start"], span["end"]))
        extractions.append(Extraction(span["tag"], surface))
    return TaggedSentence(raw=raw, plain=plain, spans=tuple(spans), extractions=ExtractionSet(extractions))


def insert_markup(plain: str, spans: Iterable[TagSpan]) -> str:
    """Re-insert tag markup into plain text; inverse of parse_tagged.

    Spans must be given in open-tag document order (as parse_tagged returns
    them); at a shared boundary, closes are emitted innermost-first and opens
    outermost-first, which reproduces well-formed input byte for byte.
    """
    span_list = list(spans)
    opens: dict[int, list[int]] = {}
    closes: dict[int, list[int]] = {}
    for i, span in enumerate(span_list):
        opens.setdefault(span.start, []).append(i)
        closes.setdefault(span.end, []).append(i)
    out: list[str] = []
    for position in range(len(plain) + 1):
        for i in sorted(closes.get(position, ()), reverse=True):
            out.append(f"</{span_list[i].tag.value}>")
        for i in sorted(opens.get(position, ())):
            out.append(f"<{span_list[i].tag.value}>")
        if position < len(plain):
            out.append(plain[position])
    return "".join(out)


_RESPONSE_LINE = re.compile(r"^\s*(?:[-*•]\s*)?([A-Za-z][A-Za-z0-9_-]*)\s*:\s*(.*)$")


def _clean_surface(text: str) -> str:
    """Strip a candidate surface and fold any internal newlines to single spaces."""
    return re.sub(r"\s*[\r\n]+\s*", " ", text).strip()


def parse_response(
    text: str, format: ResponseFormat, *, strict: bool = False
) -> tuple[ExtractionSet, list[str]]:
    """Parse a model response into extractions, tolerating noise.

    Unknown tags, empty items, and unparseable fragments are skipped and
    reported as warnings; nothing raises on arbitrary input. With
    ``strict=True``, NoParsableContent is raised when the response contains
    neither extractions nor any recognizable structure (a tag line or a JSON
    object) — the caller chooses the policy.
    """
    if format is ResponseFormat.human_readable:
        extractions, warnings, structured = _parse_human(text)
    else:
        extractions, warnings, structured = _parse_json(text)
    result = ExtractionSet(extractions)
    if strict and not result and not structured:
        raise NoParsableContent("no extractions and no recognizable structure")
    return result, warnings


def _parse_human(text: str) -> tuple[list[Extraction], list[str], bool]:
    extractions: list[Extraction] = []
    warnings: list[str] = []
    structured = False
    for line in text.splitlines():
        if not line.strip():
            continue
        match = _RESPONSE_LINE.match(line)
        if not match:
            warnings.append(f"unrecognized line: {line.strip()!r}")
            continue
        label, rest = match.group(1), match.group(2)
        try:
            tag = tag_from_label(label)
        except UnknownTag:
            warnings.append(f"unknown tag {label!r} in line {line.strip()!r}")
            continue
        structured = True
        items = [_clean_surface(part) for part in rest.split(",")]
        kept = [item for item in items if item]
        if len(kept) < len(items):
            warnings.append(f"empty item under tag {tag.value!r}")
        if not kept:
            warnings.append(f"tag line {tag.value!r} has no items")
        extractions.extend(Extraction(tag, item) for item in kept)
    return extractions, warnings, structured


def _balanced_objects(text: str) -> Iterator[str]:
    """Yield each top-level ``{…}`` block, respecting JSON string literals."""
    depth = 0
    start = 0
    in_string = False
    escaped = False
    for i, ch in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"' and depth > 0:
            in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0:
                yield text[start : i + 1]


def _parse_json(text: str) -> tuple[list[Extraction], list[str], bool]:
    extractions: list[Extraction] = []
    warnings: list[str] = []
    obj = None
    for candidate in _balanced_objects(text):
        try:
            parsed = json.loads(candidate)
        except json.JSONDecodeError:
            warnings.append("skipped a brace block that is not valid JSON")
            continue
        if isinstance(parsed, dict):
            obj = parsed
            break
        warnings.append("skipped a JSON value that is not an object")
    if obj is None:
        warnings.append("no JSON object found in response")
        return extractions, warnings, False
    for key, value in obj.items():
        try:
            tag = tag_from_label(str(key))
        except UnknownTag:
            warnings.append(f"unknown tag {key!r} in JSON object")
            continue
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, list):
            warnings.append(f"value for tag {tag.value!r} is not an array")
            continue
        for item in value:
            if not isinstance(item, str):
                warnings.append(f"non-string item under tag {tag.value!r}: {item!r}")
                continue
            surface = _clean_surface(item)
            if not surface:
                warnings.append(f"empty item under tag {tag.value!r}")
                continue
            extractions.append(Extraction(tag, surface))
    return extractions, warnings, True


def render_extractions(extractions: ExtractionSet, format: ResponseFormat) -> str:
    """Render an extraction set in the given response format, deterministically.

    Tags appear in canonical order, items in first-seen order. The
    human-readable format delimits items with ``", "`` and therefore cannot
    carry surfaces that contain commas (UnrepresentableItem); JSON can.
    """
    grouped = extractions.by_tag()
    if format is ResponseFormat.human_readable:
        for surfaces in grouped.values():
            for surface in surfaces:
                if "," in surface:
                    raise UnrepresentableItem(surface)
        return "\n".join(
            f"{tag.value}: {', '.join(surfaces)}" for tag, surfaces in grouped.items()
        )
    payload = {tag.value: surfaces for tag, surfaces in grouped.items()}
    return json.dumps(payload, ensure_ascii=False)
