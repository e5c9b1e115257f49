from __future__ import annotations

import json
from datetime import date
from pathlib import Path

import pytest

from sciconcept.corpus import PaperRecord
from sciconcept.prompting import load_gold_dir
from sciconcept.store import PredictionRow, init_db, insert_predictions, upsert_papers

FIXTURES = Path(__file__).parent / "fixtures"
GOLD_DIR = FIXTURES / "gold"
METADATA = FIXTURES / "metadata.jsonl"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the run."""
    lines = []
    for outcome, status in (("passed", "PASS"), ("failed", "FAIL"), ("skipped", "SKIP")):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = str(getattr(report, "nodeid", ""))
            if getattr(report, "when", "call") != "call" and outcome != "skipped":
                continue
            if "test_acceptance" in nodeid and "criterion" in nodeid:
                lines.append((nodeid.split("::")[-1], status))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, status in sorted(set(lines)):
            terminalreporter.write_line(f"{status}  {name}")


@pytest.fixture(scope="session")
def gold_papers():
    return load_gold_dir(GOLD_DIR)


@pytest.fixture
def tmp_db(tmp_path):
    handle = init_db(tmp_path / "corpus.db")
    yield handle
    handle.close()


def make_record(paper_id: str, category: str = "astro-ph.HE", **kwargs) -> PaperRecord:
    defaults = dict(
        paper_id=paper_id,
        title=f"Synthetic paper {paper_id}",
        abstract=f"Abstract for paper {paper_id}. It has two sentences.",
        authors=("A. Author",),
        primary_category=category,
        categories=(category,),
        published_date=date(2024, 1, 1),
    )
    defaults.update(kwargs)
    return PaperRecord(**defaults)


def seed_predictions(handle, assignments, run_id="run1"):
    """Populate a store from {paper_id: [(tag, concept), ...]} or
    {paper_id: (category, [(tag, concept), ...])}; one sentence per concept."""
    records = []
    rows = []
    for paper_id, payload in assignments.items():
        if isinstance(payload, tuple):
            category, concepts = payload
        else:
            category, concepts = "astro-ph.HE", payload
        records.append(make_record(paper_id, category=category))
        for index, (tag, concept) in enumerate(concepts):
            rows.append(
                PredictionRow(
                    paper_id=paper_id,
                    sentence_index=index,
                    tag=tag,
                    concept=concept,
                    concept_norm=" ".join(concept.casefold().split()),
                    run_id=run_id,
                )
            )
    upsert_papers(handle, records)
    insert_predictions(handle, rows)
    return records, rows
