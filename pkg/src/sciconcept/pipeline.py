"""End-to-end extraction: segment, prompt, complete, parse, persist, resume.

Papers are processed by a bounded worker pool; all store writes happen on the
caller's thread, one transaction per paper, so a crash leaves only whole
papers behind. A JSON checkpoint per run records completed paper ids (papers
whose every sentence parsed empty leave no prediction rows, so the store
alone cannot witness them) and the final summary.
"""

from __future__ import annotations

import json
import logging
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import store as store_mod
from .annotations import ExtractionSet, ResponseFormat, parse_response, render_extractions
from .corpus import PaperRecord, Sentence, normalize_text, segment_sentences
from .gateway import Backend, CompletionRequest, GatewayError, StubBackend, fingerprint
from .prompting import FewShotExample, GoldPaper, PromptConfig, build_prompt
from .schema import SchemaDef, default_schema
from .store import PredictionRow, StoreHandle

log = logging.getLogger(__name__)

STATUS_OK = "ok"
STATUS_PARSE_EMPTY = "parse_empty"
STATUS_FAILED = "failed"


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a run needs besides the records, backend and store."""

    run_id: str
    prompt: PromptConfig = field(default_factory=PromptConfig)
    schema: SchemaDef = field(default_factory=default_schema)
    examples: tuple[FewShotExample, ...] = ()
    max_tokens: int = 512
    temperature: float = 0.0
    stop_sequences: tuple[str, ...] = ()
    max_workers: int = 4
    abbreviations: frozenset[str] | None = None

    def snapshot(self) -> dict:
        return {
            "run_id": self.run_id,
            "format": str(self.prompt.format),
            "granularity": self.prompt.granularity,
            "example_order": self.prompt.example_order,
            "sentences_per_demo": self.prompt.sentences_per_demo,
            "demo_paper_ids": list(self.prompt.demo_paper_ids),
            "n_examples": len(self.examples),
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
            "max_workers": self.max_workers,
        }


@dataclass
class SentenceResult:
    """Outcome for one sentence: parsed extractions plus the archived raw reply."""

    sentence: Sentence
    extractions: ExtractionSet
    raw_response: str
    latency: float | None
    warnings: list[str]
    status: str


@dataclass
class PaperExtraction:
    """All sentence results for one paper under one run."""

    paper_id: str
    run_id: str
    results: list[SentenceResult]
    started: datetime
    finished: datetime


@dataclass
class RunSummary:
    """Bookkeeping for a run; latency stats are over sentences with a request."""

    run_id: str
    papers_attempted: int = 0
    papers_succeeded: int = 0
    papers_failed: int = 0
    papers_skipped: int = 0
    sentences_ok: int = 0
    sentences_parse_empty: int = 0
    sentences_failed: int = 0
    latency_mean: float | None = None
    latency_std: float | None = None
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "papers": {
                "attempted": self.papers_attempted,
                "succeeded": self.papers_succeeded,
                "failed": self.papers_failed,
                "skipped": self.papers_skipped,
            },
            "sentences": {
                "ok": self.sentences_ok,
                "parse_empty": self.sentences_parse_empty,
                "failed": self.sentences_failed,
            },
            "latency_seconds": {"mean": self.latency_mean, "std": self.latency_std},
            "config": self.config,
        }


def paper_units(
    record: PaperRecord,
    granularity: str = "sentence",
    abbreviations: frozenset[str] | None = None,
) -> list[Sentence]:
    """The text units extracted for one paper; paragraph mode keeps the
    abstract whole (title stays its own unit)."""
    if granularity == "paragraph":
        return [
            Sentence(record.paper_id, 0, record.title),
            Sentence(record.paper_id, 1, normalize_text(record.abstract)),
        ]
    return segment_sentences(record, abbreviations)


def extract_paper(
    record: PaperRecord,
    schema: SchemaDef,
    examples: Sequence[FewShotExample],
    config: PipelineConfig,
    backend: Backend,
) -> PaperExtraction:
    """Extract every unit of one paper; a sentence failure never aborts the paper."""
    started = datetime.now(timezone.utc)
    results: list[SentenceResult] = []
    for unit in paper_units(record, config.prompt.granularity, config.abbreviations):
        prompt = build_prompt(schema, examples, unit.text, config.prompt)
        request = CompletionRequest(
            prompt=prompt,
            max_tokens=config.max_tokens,
            temperature=config.temperature,
            stop_sequences=config.stop_sequences,
        )
        begin = time.perf_counter()
        try:
            completion = backend.complete(request)
        except GatewayError as exc:
            results.append(
                SentenceResult(
                    sentence=unit,
                    extractions=ExtractionSet(),
                    raw_response="",
                    latency=time.perf_counter() - begin,
                    warnings=[str(exc)],
                    status=STATUS_FAILED,
                )
            )
            continue
        extractions, warnings = parse_response(completion.text, config.prompt.format)
        results.append(
            SentenceResult(
                sentence=unit,
                extractions=extractions,
                raw_response=completion.text,
                latency=completion.latency,
                warnings=warnings,
                status=STATUS_OK if extractions else STATUS_PARSE_EMPTY,
            )
        )
    return PaperExtraction(
        paper_id=record.paper_id,
        run_id=config.run_id,
        results=results,
        started=started,
        finished=datetime.now(timezone.utc),
    )


def concept_norm(surface: str) -> str:
    """Normalization used for stored concepts: case-fold + whitespace-collapse."""
    return " ".join(surface.casefold().split())


def aggregate(extraction: PaperExtraction) -> list[PredictionRow]:
    """Flatten a paper's results into prediction rows (dedup stays per sentence)."""
    rows: list[PredictionRow] = []
    for result in extraction.results:
        for item in result.extractions:
            rows.append(
                PredictionRow(
                    paper_id=extraction.paper_id,
                    sentence_index=result.sentence.index,
                    tag=item.tag,
                    concept=item.surface,
                    concept_norm=concept_norm(item.surface),
                    run_id=extraction.run_id,
                )
            )
    return rows


def default_checkpoint_path(db_path: str | Path, run_id: str) -> Path:
    return Path(f"{db_path}.{run_id}.checkpoint.json")


def default_archive_path(db_path: str | Path, run_id: str) -> Path:
    return Path(f"{db_path}.{run_id}.responses.jsonl")


def _load_checkpoint(path: Path) -> set[str]:
    if not path.exists():
        return set()
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        return set(payload.get("completed", []))
    except (json.JSONDecodeError, OSError):
        log.warning("ignoring unreadable checkpoint %s", path)
        return set()


def _write_checkpoint(path: Path, run_id: str, completed: set[str], summary: dict | None) -> None:
    payload = {"run_id": run_id, "completed": sorted(completed), "summary": summary}
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    os.replace(tmp, path)


def run_corpus(
    records: Sequence[PaperRecord],
    config: PipelineConfig,
    backend: Backend,
    store: StoreHandle,
    checkpoint_path: str | Path | None = None,
    archive_path: str | Path | None = None,
) -> RunSummary:
    """Extract a corpus with bounded parallelism and per-paper atomic persistence.

    Papers already completed under this run id (checkpoint or existing
    prediction rows) are skipped, so rerunning is cheap and the final store
    state is identical to a single run. Every raw model response is appended
    to the run's archive (JSON lines), which reparse_archive can replay after
    a response-format fix without re-prompting.
    """
    checkpoint = (
        Path(checkpoint_path)
        if checkpoint_path is not None
        else default_checkpoint_path(store.path, config.run_id)
    )
    archive = (
        Path(archive_path)
        if archive_path is not None
        else default_archive_path(store.path, config.run_id)
    )
    completed = _load_checkpoint(checkpoint) | store_mod.completed_papers(store, config.run_id)
    todo = [r for r in records if r.paper_id not in completed]
    summary = RunSummary(
        run_id=config.run_id,
        papers_skipped=len(records) - len(todo),
        papers_attempted=len(todo),
        config=config.snapshot(),
    )
    latencies: list[float] = []

    def tally(extraction: PaperExtraction) -> None:
        for result in extraction.results:
            if result.status == STATUS_OK:
                summary.sentences_ok += 1
            elif result.status == STATUS_PARSE_EMPTY:
                summary.sentences_parse_empty += 1
            else:
                summary.sentences_failed += 1
            if result.latency is not None:
                latencies.append(result.latency)

    with ThreadPoolExecutor(max_workers=config.max_workers) as pool, open(
        archive, "a", encoding="utf-8"
    ) as archive_file:
        futures = {
            pool.submit(extract_paper, record, config.schema, config.examples, config, backend): record
            for record in todo
        }
        for future in as_completed(futures):
            record = futures[future]
            try:
                extraction = future.result()
            except Exception:
                summary.papers_failed += 1
                log.exception("paper %s failed", record.paper_id)
                continue
            rows = aggregate(extraction)
            _append_archive(archive_file, extraction)
            store_mod.persist_paper(store, record, rows)
            completed.add(record.paper_id)
            tally(extraction)
            summary.papers_succeeded += 1
            mean_latency = statistics.fmean(
                [r.latency for r in extraction.results if r.latency is not None] or [0.0]
            )
            log.info("%s %s %d %.3f", record.paper_id, STATUS_OK, len(rows), mean_latency)
            _write_checkpoint(checkpoint, config.run_id, completed, None)

    if latencies:
        summary.latency_mean = statistics.fmean(latencies)
        summary.latency_std = statistics.stdev(latencies) if len(latencies) > 1 else 0.0
    _write_checkpoint(checkpoint, config.run_id, completed, summary.to_dict())
    return summary


def _append_archive(archive_file, extraction: PaperExtraction) -> None:
    for result in extraction.results:
        payload = {
            "paper_id": extraction.paper_id,
            "run_id": extraction.run_id,
            "sentence_index": result.sentence.index,
            "sentence_text": result.sentence.text,
            "status": result.status,
            "latency": result.latency,
            "warnings": result.warnings,
            "raw_response": result.raw_response,
        }
        archive_file.write(json.dumps(payload, ensure_ascii=False) + "\n")
    archive_file.flush()


def reparse_archive(
    archive_path: str | Path,
    format: ResponseFormat,
    into_run: str,
    store: StoreHandle,
) -> RunSummary:
    """Re-parse archived raw responses and insert the rows under a new run id.

    Covers response-format fixes (e.g. a run parsed as human-readable whose
    model actually replied JSON) without re-prompting. Duplicate archive
    lines for a sentence (a crash between archive append and commit) resolve
    to the last occurrence. Sentences whose original request failed stay
    failed; nothing is re-sent.
    """
    by_key: dict[tuple[str, int], dict] = {}
    with open(archive_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                payload = json.loads(line)
                by_key[(payload["paper_id"], payload["sentence_index"])] = payload

    summary = RunSummary(run_id=into_run, config={"reparsed_from": str(archive_path)})
    rows: list[PredictionRow] = []
    papers: set[str] = set()
    for (paper_id, index), payload in sorted(by_key.items()):
        papers.add(paper_id)
        if payload["status"] == STATUS_FAILED:
            summary.sentences_failed += 1
            continue
        extractions, _warnings = parse_response(payload["raw_response"], format)
        if extractions:
            summary.sentences_ok += 1
        else:
            summary.sentences_parse_empty += 1
        for item in extractions:
            rows.append(
                PredictionRow(
                    paper_id=paper_id,
                    sentence_index=index,
                    tag=item.tag,
                    concept=item.surface,
                    concept_norm=concept_norm(item.surface),
                    run_id=into_run,
                )
            )
    store_mod.insert_predictions(store, rows)
    summary.papers_attempted = summary.papers_succeeded = len(papers)
    return summary


def gold_echo_backend(
    gold: Sequence[GoldPaper],
    schema: SchemaDef,
    config: PipelineConfig,
) -> StubBackend:
    """Stub that answers every gold sentence's prompt with its rendered gold set.

    Running the pipeline against it must reproduce the gold annotations
    exactly, which pins down that prompting, parsing and aggregation are
    mutually consistent.
    """
    table: dict[str, str] = {}
    for paper in gold:
        for sentence, extractions in paper.sentences:
            prompt = build_prompt(schema, config.examples, sentence.text, config.prompt)
            table[fingerprint(prompt)] = render_extractions(extractions, config.prompt.format)
    return StubBackend(table, default="")
