"""Relational persistence: the papers and predictions tables over SQLite.

The file holds exactly two tables. Mutations go through the typed upsert and
insert operations (single writer); ad-hoc SQL runs through query_readonly,
which opens an independent read-only session per call, vets the statement,
and enforces a row cap and an execution deadline.
"""

from __future__ import annotations

import re
import sqlite3
import time
from dataclasses import dataclass
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import PaperRecord
from .errors import SciConceptError
from .schema import TagType, tag_from_label

_AUTHOR_SEP = "; "
_CATEGORY_SEP = " "


class IoFailure(SciConceptError):
    """The database file could not be created or opened."""


class StoreUnavailable(SciConceptError):
    """The database is missing or unreadable."""


class ForeignKeyViolation(SciConceptError):
    """A prediction references a paper that is not in the papers table."""


class RejectedStatement(SciConceptError):
    """The statement is not a single read-only SELECT."""


class QueryTimeout(SciConceptError):
    """Query execution exceeded its deadline."""


class SqlError(SciConceptError):
    """The engine rejected the statement (syntax, unknown column, ...)."""


class UnknownQuery(SciConceptError):
    """No predefined query with that name."""


class BadParams(SciConceptError):
    """Predefined query parameters are missing or of the wrong shape."""


@dataclass(frozen=True)
class PredictionRow:
    """One persisted extraction; concept_norm is case-folded and space-collapsed."""

    paper_id: str
    sentence_index: int
    tag: TagType
    concept: str
    concept_norm: str
    run_id: str


@dataclass
class QueryResult:
    """Tabular result with a truncation marker when the row cap was hit."""

    columns: list[str]
    rows: list[tuple]
    truncated: bool = False

    @property
    def row_count(self) -> int:
        return len(self.rows)

    def to_dict(self) -> dict:
        return {
            "columns": self.columns,
            "rows": [list(row) for row in self.rows],
            "truncated": self.truncated,
            "row_count": self.row_count,
        }


_SCHEMA_SQL = """
CREATE TABLE IF NOT EXISTS papers (
    paper_id TEXT PRIMARY KEY,
    title TEXT NOT NULL,
    abstract TEXT NOT NULL,
    authors TEXT NOT NULL DEFAULT '',
    primary_category TEXT NOT NULL DEFAULT '',
    categories TEXT NOT NULL DEFAULT '',
    published_date TEXT NOT NULL,
    updated_date TEXT,
    ingested_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS predictions (
    prediction_id INTEGER PRIMARY KEY,
    paper_id TEXT NOT NULL REFERENCES papers(paper_id),
    sentence_index INTEGER NOT NULL,
    tag TEXT NOT NULL,
    concept TEXT NOT NULL,
    concept_norm TEXT NOT NULL,
    run_id TEXT NOT NULL,
    created_at TEXT NOT NULL,
    UNIQUE (paper_id, sentence_index, tag, concept_norm, run_id)
);
CREATE INDEX IF NOT EXISTS idx_predictions_tag ON predictions(tag);
CREATE INDEX IF NOT EXISTS idx_predictions_concept_norm ON predictions(concept_norm);
CREATE INDEX IF NOT EXISTS idx_predictions_paper ON predictions(paper_id);
CREATE INDEX IF NOT EXISTS idx_papers_category ON papers(primary_category);
CREATE INDEX IF NOT EXISTS idx_papers_published ON papers(published_date);
"""


class StoreHandle:
    """A database path plus (for writable handles) the single writer connection."""

    def __init__(self, path: str | Path, conn: sqlite3.Connection | None):
        self.path = Path(path)
        self._conn = conn

    @property
    def conn(self) -> sqlite3.Connection:
        if self._conn is None:
            raise StoreUnavailable(f"{self.path} is open read-only")
        return self._conn

    def connect_readonly(self) -> sqlite3.Connection:
        if not self.path.exists():
            raise StoreUnavailable(f"database file {self.path} does not exist")
        try:
            conn = sqlite3.connect(f"file:{self.path}?mode=ro", uri=True)
        except sqlite3.Error as exc:
            raise StoreUnavailable(f"cannot open {self.path}: {exc}") from None
        return conn

    def close(self) -> None:
        if self._conn is not None:
            self._conn.close()
            self._conn = None


def init_db(path: str | Path) -> StoreHandle:
    """Create (or open) the database, tables and indexes; idempotent."""
    try:
        conn = sqlite3.connect(path)
        conn.execute("PRAGMA foreign_keys = ON")
        conn.executescript(_SCHEMA_SQL)
        conn.commit()
    except sqlite3.Error as exc:
        raise IoFailure(f"cannot initialize database at {path}: {exc}") from None
    return StoreHandle(path, conn)


def open_store(path: str | Path) -> StoreHandle:
    """Open an existing database for reading (queries, graph builds, serving)."""
    handle = StoreHandle(path, None)
    handle.connect_readonly().close()
    return handle


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _date_text(value: date | None) -> str | None:
    return value.isoformat() if value is not None else None


def upsert_papers(handle: StoreHandle, records: Iterable[PaperRecord]) -> tuple[int, int]:
    """Insert or update papers by id; returns (inserted, updated) counts."""
    inserted = updated = 0
    conn = handle.conn
    with conn:
        for record in records:
            exists = conn.execute(
                "SELECT 1 FROM papers WHERE paper_id = ?", (record.paper_id,)
            ).fetchone()
            upsert_papers_unlocked(conn, record)
            if exists:
                updated += 1
            else:
                inserted += 1
    return inserted, updated


def insert_predictions(handle: StoreHandle, rows: Iterable[PredictionRow]) -> int:
    """Insert prediction rows, deduplicated by the unique key; returns new-row count."""
    conn = handle.conn
    try:
        with conn:
            return insert_predictions_unlocked(conn, list(rows))
    except sqlite3.IntegrityError as exc:
        raise ForeignKeyViolation(str(exc)) from None


def persist_paper(
    handle: StoreHandle, record: PaperRecord, rows: Sequence[PredictionRow]
) -> int:
    """Upsert one paper and its prediction rows in a single transaction."""
    conn = handle.conn
    try:
        with conn:
            upsert_papers_unlocked(conn, record)
            return insert_predictions_unlocked(conn, rows)
    except sqlite3.IntegrityError as exc:
        raise ForeignKeyViolation(str(exc)) from None


def upsert_papers_unlocked(conn: sqlite3.Connection, record: PaperRecord) -> None:
    conn.execute(
        """
        INSERT INTO papers (paper_id, title, abstract, authors, primary_category,
                            categories, published_date, updated_date, ingested_at)
        VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)
        ON CONFLICT(paper_id) DO UPDATE SET
            title = excluded.title, abstract = excluded.abstract,
            authors = excluded.authors, primary_category = excluded.primary_category,
            categories = excluded.categories, published_date = excluded.published_date,
            updated_date = excluded.updated_date, ingested_at = excluded.ingested_at
        """,
        (
            record.paper_id,
            record.title,
            record.abstract,
            _AUTHOR_SEP.join(record.authors),
            record.primary_category,
            _CATEGORY_SEP.join(record.categories),
            record.published_date.isoformat(),
            _date_text(record.updated_date),
            _now(),
        ),
    )


def insert_predictions_unlocked(conn: sqlite3.Connection, rows: Sequence[PredictionRow]) -> int:
    payload = []
    for row in rows:
        tag = row.tag if isinstance(row.tag, TagType) else tag_from_label(str(row.tag))
        payload.append(
            (
                row.paper_id,
                row.sentence_index,
                tag.value,
                row.concept,
                row.concept_norm,
                row.run_id,
                _now(),
            )
        )
    before = conn.total_changes
    conn.executemany(
        """
        INSERT OR IGNORE INTO predictions
            (paper_id, sentence_index, tag, concept, concept_norm, run_id, created_at)
        VALUES (?, ?, ?, ?, ?, ?, ?)
        """,
        payload,
    )
    return conn.total_changes - before


_STATEMENT_OK = re.compile(r"^\s*(SELECT|WITH)\b", re.IGNORECASE)

_READONLY_ALLOWED_OPS = frozenset(
    {
        sqlite3.SQLITE_SELECT,
        sqlite3.SQLITE_READ,
        sqlite3.SQLITE_FUNCTION,
        getattr(sqlite3, "SQLITE_RECURSIVE", 33),
    }
)


def query_readonly(
    handle: StoreHandle,
    sql: str,
    max_rows: int = 1000,
    timeout: float = 5.0,
) -> QueryResult:
    """Run one SELECT on an independent read-only session.

    Anything that is not a single statement starting with SELECT (or
    WITH … SELECT) is rejected before execution; a connection authorizer
    denies every non-read operation as a second line of defense. Rows are
    capped at max_rows with a truncation flag, and execution is aborted once
    the timeout elapses.
    """
    if not _STATEMENT_OK.match(sql):
        raise RejectedStatement("only a single SELECT (or WITH ... SELECT) is allowed")
    conn = handle.connect_readonly()
    deadline = time.perf_counter() + timeout

    def authorize(op, *_args):
        return sqlite3.SQLITE_OK if op in _READONLY_ALLOWED_OPS else sqlite3.SQLITE_DENY

    conn.set_authorizer(authorize)
    conn.set_progress_handler(lambda: 1 if time.perf_counter() > deadline else 0, 2000)
    try:
        cursor = conn.execute(sql)
        fetched = cursor.fetchmany(max_rows + 1)
        columns = [d[0] for d in cursor.description] if cursor.description else []
        truncated = len(fetched) > max_rows
        return QueryResult(columns=columns, rows=[tuple(r) for r in fetched[:max_rows]], truncated=truncated)
    except sqlite3.Warning as exc:
        raise RejectedStatement(str(exc)) from None
    except sqlite3.ProgrammingError as exc:
        raise RejectedStatement(str(exc)) from None
    except sqlite3.OperationalError as exc:
        message = str(exc)
        if "interrupted" in message:
            raise QueryTimeout(f"query exceeded {timeout:.1f}s") from None
        if "not authorized" in message or "authoriz" in message.lower():
            raise RejectedStatement(message) from None
        raise SqlError(message) from None
    except sqlite3.DatabaseError as exc:
        message = str(exc)
        if "not authorized" in message or "authoriz" in message.lower():
            raise RejectedStatement(message) from None
        raise SqlError(message) from None
    finally:
        conn.close()


def _like_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("%", "\\%").replace("_", "\\_")


def _category_clause(category_prefix: str) -> tuple[str, str]:
    return "p.primary_category LIKE ? ESCAPE '\\'", _like_escape(category_prefix) + "%"


def _require_str(params: Mapping[str, object], key: str) -> str:
    value = params.get(key)
    if not isinstance(value, str) or not value.strip():
        raise BadParams(f"parameter {key!r} must be a non-empty string")
    return value.strip()


def _require_date(params: Mapping[str, object], key: str) -> str:
    value = params.get(key)
    if isinstance(value, date):
        return value.isoformat()
    if isinstance(value, str):
        try:
            return date.fromisoformat(value.strip()).isoformat()
        except ValueError:
            pass
    raise BadParams(f"parameter {key!r} must be an ISO date (YYYY-MM-DD)")


PREDEFINED_QUERIES = ("new_datasets_since", "datasets_with_concept", "modality_distribution")


def predefined_query(handle: StoreHandle, name: str, params: Mapping[str, object]) -> QueryResult:
    """Run one of the named analytical queries with typed parameters.

    * ``new_datasets_since(category, since)`` — dataset-tagged concepts from
      papers in the category published after the date, newest first.
    * ``datasets_with_concept(category, pattern)`` — papers in the category
      having both a dataset row and any concept matching the pattern
      (case-insensitive substring on the normalized concept).
    * ``modality_distribution(category, term_a, term_b)`` — partitions the
      category's papers into only-A / only-B / both / neither by substring
      match on modality-tagged concepts. The denominator is every paper in
      the category slice, whether or not it has modality rows.
    """
    if name == "new_datasets_since":
        return _new_datasets_since(handle, params)
    if name == "datasets_with_concept":
        return _datasets_with_concept(handle, params)
    if name == "modality_distribution":
        return _modality_distribution(handle, params)
    raise UnknownQuery(name)


def _new_datasets_since(handle: StoreHandle, params: Mapping[str, object]) -> QueryResult:
    category = _require_str(params, "category")
    since = _require_date(params, "since")
    clause, like = _category_clause(category)
    conn = handle.connect_readonly()
    try:
        rows = conn.execute(
            f"""
            SELECT p.title, MIN(pr.concept) AS dataset, p.published_date
            FROM predictions pr JOIN papers p ON p.paper_id = pr.paper_id
            WHERE pr.tag = 'dataset' AND {clause} AND p.published_date > ?
            GROUP BY p.paper_id, pr.concept_norm
            ORDER BY p.published_date DESC, p.title ASC, dataset ASC
            """,
            (like, since),
        ).fetchall()
    finally:
        conn.close()
    return QueryResult(columns=["title", "dataset", "published_date"], rows=[tuple(r) for r in rows])


def _datasets_with_concept(handle: StoreHandle, params: Mapping[str, object]) -> QueryResult:
    category = _require_str(params, "category")
    pattern = _require_str(params, "pattern").casefold()
    clause, like = _category_clause(category)
    conn = handle.connect_readonly()
    try:
        rows = conn.execute(
            f"""
            SELECT p.title, MIN(d.concept) AS dataset, MIN(h.concept) AS matched
            FROM papers p
            JOIN predictions d ON d.paper_id = p.paper_id AND d.tag = 'dataset'
            JOIN predictions h ON h.paper_id = p.paper_id
                AND instr(h.concept_norm, ?) > 0
            WHERE {clause}
            GROUP BY p.paper_id, d.concept_norm
            ORDER BY p.title ASC, dataset ASC
            """,
            (pattern, like),
        ).fetchall()
    finally:
        conn.close()
    return QueryResult(columns=["title", "dataset", "matched_concept"], rows=[tuple(r) for r in rows])


def _modality_distribution(handle: StoreHandle, params: Mapping[str, object]) -> QueryResult:
    category = _require_str(params, "category")
    term_a = _require_str(params, "term_a").casefold()
    term_b = _require_str(params, "term_b").casefold()
    clause, like = _category_clause(category)
    conn = handle.connect_readonly()
    try:
        total = conn.execute(
            f"SELECT COUNT(*) FROM papers p WHERE {clause}", (like,)
        ).fetchone()[0]
        flags = conn.execute(
            f"""
            SELECT p.paper_id,
                   MAX(CASE WHEN instr(pr.concept_norm, ?) > 0 THEN 1 ELSE 0 END) AS has_a,
                   MAX(CASE WHEN instr(pr.concept_norm, ?) > 0 THEN 1 ELSE 0 END) AS has_b
            FROM papers p JOIN predictions pr
                 ON pr.paper_id = p.paper_id AND pr.tag = 'modality'
            WHERE {clause}
            GROUP BY p.paper_id
            """,
            (term_a, term_b, like),
        ).fetchall()
    finally:
        conn.close()
    only_a = sum(1 for _, a, b in flags if a and not b)
    only_b = sum(1 for _, a, b in flags if b and not a)
    both = sum(1 for _, a, b in flags if a and b)
    neither = total - only_a - only_b - both

    def pct(count: int) -> float:
        return round(100.0 * count / total, 2) if total else 0.0

    rows = [
        (f"only {params['term_a']}", only_a, pct(only_a)),
        (f"only {params['term_b']}", only_b, pct(only_b)),
        ("both", both, pct(both)),
        ("neither", neither, pct(neither)),
    ]
    return QueryResult(columns=["bucket", "paper_count", "percentage"], rows=rows)


def load_papers(
    handle: StoreHandle,
    category_prefix: str | None = None,
    limit: int | None = None,
) -> list[PaperRecord]:
    """Read papers back as records, ordered by paper_id."""
    sql = (
        "SELECT paper_id, title, abstract, authors, primary_category, categories, "
        "published_date, updated_date FROM papers"
    )
    args: list[object] = []
    if category_prefix:
        sql += " WHERE primary_category LIKE ? ESCAPE '\\'"
        args.append(_like_escape(category_prefix) + "%")
    sql += " ORDER BY paper_id"
    if limit is not None:
        sql += " LIMIT ?"
        args.append(limit)
    conn = handle.connect_readonly()
    try:
        rows = conn.execute(sql, args).fetchall()
    finally:
        conn.close()
    records = []
    for row in rows:
        records.append(
            PaperRecord(
                paper_id=row[0],
                title=row[1],
                abstract=row[2],
                authors=tuple(a for a in row[3].split(_AUTHOR_SEP) if a),
                primary_category=row[4],
                categories=tuple(row[5].split(_CATEGORY_SEP)) if row[5] else (),
                published_date=date.fromisoformat(row[6]),
                updated_date=date.fromisoformat(row[7]) if row[7] else None,
            )
        )
    return records


def get_paper(handle: StoreHandle, paper_id: str) -> dict | None:
    """Fetch one paper (with its prediction rows) as a plain dict, or None."""
    conn = handle.connect_readonly()
    try:
        row = conn.execute(
            "SELECT paper_id, title, abstract, authors, primary_category, categories, "
            "published_date, updated_date FROM papers WHERE paper_id = ?",
            (paper_id,),
        ).fetchone()
        if row is None:
            return None
        predictions = conn.execute(
            "SELECT sentence_index, tag, concept, concept_norm, run_id FROM predictions "
            "WHERE paper_id = ? ORDER BY run_id, sentence_index, tag, concept_norm",
            (paper_id,),
        ).fetchall()
    finally:
        conn.close()
    return {
        "paper_id": row[0],
        "title": row[1],
        "abstract": row[2],
        "authors": [a for a in row[3].split(_AUTHOR_SEP) if a],
        "primary_category": row[4],
        "categories": row[5].split(_CATEGORY_SEP) if row[5] else [],
        "published_date": row[6],
        "updated_date": row[7],
        "predictions": [
            {
                "sentence_index": p[0],
                "tag": p[1],
                "concept": p[2],
                "concept_norm": p[3],
                "run_id": p[4],
            }
            for p in predictions
        ],
    }


def completed_papers(handle: StoreHandle, run_id: str) -> set[str]:
    """Paper ids that already have prediction rows under the run."""
    if not handle.path.exists():
        return set()
    conn = handle.connect_readonly()
    try:
        rows = conn.execute(
            "SELECT DISTINCT paper_id FROM predictions WHERE run_id = ?", (run_id,)
        ).fetchall()
    finally:
        conn.close()
    return {row[0] for row in rows}


def iter_prediction_rows(
    handle: StoreHandle,
    run_id: str | None = None,
    category_prefix: str | None = None,
) -> list[tuple[str, str, str, str]]:
    """(paper_id, tag, concept, concept_norm) rows, optionally filtered."""
    sql = (
        "SELECT pr.paper_id, pr.tag, pr.concept, pr.concept_norm "
        "FROM predictions pr JOIN papers p ON p.paper_id = pr.paper_id"
    )
    clauses = []
    args: list[object] = []
    if run_id:
        clauses.append("pr.run_id = ?")
        args.append(run_id)
    if category_prefix:
        clauses.append("p.primary_category LIKE ? ESCAPE '\\'")
        args.append(_like_escape(category_prefix) + "%")
    if clauses:
        sql += " WHERE " + " AND ".join(clauses)
    sql += " ORDER BY pr.paper_id, pr.sentence_index, pr.tag, pr.concept_norm"
    conn = handle.connect_readonly()
    try:
        return [tuple(row) for row in conn.execute(sql, args).fetchall()]
    finally:
        conn.close()


def stats(handle: StoreHandle) -> dict:
    """Corpus and run summary counts for the stats endpoint."""
    conn = handle.connect_readonly()
    try:
        papers = conn.execute("SELECT COUNT(*) FROM papers").fetchone()[0]
        predictions = conn.execute("SELECT COUNT(*) FROM predictions").fetchone()[0]
        runs = dict(
            conn.execute(
                "SELECT run_id, COUNT(*) FROM predictions GROUP BY run_id ORDER BY run_id"
            ).fetchall()
        )
        tags = dict(
            conn.execute(
                "SELECT tag, COUNT(*) FROM predictions GROUP BY tag ORDER BY tag"
            ).fetchall()
        )
        categories = dict(
            conn.execute(
                "SELECT primary_category, COUNT(*) FROM papers "
                "GROUP BY primary_category ORDER BY primary_category"
            ).fetchall()
        )
    finally:
        conn.close()
    return {
        "papers": papers,
        "predictions": predictions,
        "runs": runs,
        "tags": tags,
        "categories": categories,
    }
