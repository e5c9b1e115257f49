"""The nine-category concept schema: tag types, definitions, prompt rendering.

The tag identities are fixed; the prose definitions can be overridden from a
config file (one ``tag: definition`` line per entry) for prompt experiments.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import SciConceptError


class UnknownTag(SciConceptError):
    """A label does not name one of the nine tag types."""

    def __init__(self, label: str):
        super().__init__(f"unknown tag {label!r}")
        self.label = label


class SchemaFileError(SciConceptError):
    """A schema override file could not be loaded."""


class TagType(str, Enum):
    """The nine concept categories, in canonical display order."""

    model = "model"
    task = "task"
    dataset = "dataset"
    field = "field"
    modality = "modality"
    method = "method"
    object = "object"
    property = "property"
    instrument = "instrument"

    def __str__(self) -> str:
        return self.value


TAG_ORDER: tuple[TagType, ...] = tuple(TagType)

_TAG_RANK = {tag: i for i, tag in enumerate(TAG_ORDER)}
_BY_VALUE = {tag.value: tag for tag in TagType}

_DEFAULT_DEFINITIONS: dict[TagType, str] = {
    TagType.model: (
        "representation of a (scientific) phenomenon using mathematical "
        "formalism and/or computational simulation"
    ),
    TagType.task: "specific problem, objective or goal to be accomplished",
    TagType.dataset: "collection of data, measurements or observations",
    TagType.field: "academic (sub)discipline",
    TagType.modality: (
        "class or type of data/observations with similar or the same structure"
    ),
    TagType.method: "approach, technique or procedure to complete a task",
    TagType.object: "entity that can be studied",
    TagType.property: (
        "quantitative or qualitative descriptor, or an inherent attribute of "
        "an entity, data, modality or method"
    ),
    TagType.instrument: "device or system used for making measurements",
}


def tag_rank(tag: TagType) -> int:
    """Position of a tag in the canonical display order."""
    return _TAG_RANK[tag]


def tag_from_label(label: str) -> TagType:
    """Resolve a tag from free-form text (case-insensitive, trimmed).

    Raises UnknownTag for anything outside the nine categories.
    """
    key = label.strip().lower()
    try:
        return _BY_VALUE[key]
    except KeyError:
        raise UnknownTag(label) from None


@dataclass(frozen=True)
class SchemaDef:
    """Ordered (tag, definition) entries; each tag appears exactly once."""

    entries: tuple[tuple[TagType, str], ...]

    def __post_init__(self) -> None:
        tags = [tag for tag, _ in self.entries]
        if Counter(tags) != Counter(TagType):
            raise ValueError("schema must contain each tag exactly once")
        for tag, definition in self.entries:
            if not definition.strip():
                raise ValueError(f"empty definition for tag {tag.value!r}")

    def definition(self, tag: TagType) -> str:
        for entry_tag, definition in self.entries:
            if entry_tag is tag:
                return definition
        raise KeyError(tag)


def default_schema() -> SchemaDef:
    """The built-in schema with the standard definitions, in canonical order."""
    return SchemaDef(tuple(_DEFAULT_DEFINITIONS.items()))


def render_schema(schema: SchemaDef) -> str:
    """Render a schema as one ``tag: definition`` line per entry, in schema order."""
    return "\n".join(f"{tag.value}: {definition}" for tag, definition in schema.entries)


def load_schema(path: str | Path) -> SchemaDef:
    """Load definition overrides from a text file.

    Each non-blank, non-``#`` line must be ``tag: definition``. Tags not
    mentioned keep their default definition; the result is always in canonical
    order. Unknown tag names and duplicate entries are load-time errors.
    """
    overrides: dict[TagType, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        name, sep, definition = stripped.partition(":")
        if not sep:
            raise SchemaFileError(f"{path}:{lineno}: expected 'tag: definition'")
        tag = tag_from_label(name)
        if tag in overrides:
            raise SchemaFileError(f"{path}:{lineno}: duplicate entry for {tag.value!r}")
        if not definition.strip():
            raise SchemaFileError(f"{path}:{lineno}: empty definition for {tag.value!r}")
        overrides[tag] = definition.strip()
    entries = tuple(
        (tag, overrides.get(tag, _DEFAULT_DEFINITIONS[tag])) for tag in TAG_ORDER
    )
    return SchemaDef(entries)
