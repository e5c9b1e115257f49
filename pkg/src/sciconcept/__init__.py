"""Schema-typed concept extraction from paper titles and abstracts.

The toolkit covers the full path from metadata ingestion through few-shot
prompting and response parsing to a queryable SQLite store, exact-match
evaluation, a RAKE keyword baseline, a co-occurrence concept graph, and an
HTTP API + CLI around all of it.
"""

from .annotations import (
    Extraction,
    ExtractionSet,
    ResponseFormat,
    parse_response,
    parse_tagged,
    render_extractions,
)
from .schema import SchemaDef, TagType, default_schema, render_schema, tag_from_label

__version__ = "0.1.0"

__all__ = [
    "Extraction",
    "ExtractionSet",
    "ResponseFormat",
    "SchemaDef",
    "TagType",
    "default_schema",
    "parse_response",
    "parse_tagged",
    "render_extractions",
    "render_schema",
    "tag_from_label",
    "__version__",
]
