"""Gold annotations, few-shot example selection, and prompt assembly.

Gold files carry one paper each: a ``#paper <id>`` header line followed by one
inline-tagged sentence per line. Example selection is deterministic — the
first k annotated sentences of each demonstration paper — so runs are
reproducible; curated selections can be expressed by editing the gold files
or the demo paper list.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

from .annotations import (
    ExtractionSet,
    MalformedMarkup,
    ResponseFormat,
    parse_tagged,
    render_extractions,
)
from .corpus import Sentence
from .errors import SciConceptError
from .schema import SchemaDef, render_schema


class EmptyGold(SciConceptError):
    """A gold file contains no header or no sentences."""


class SurfaceMismatch(SciConceptError):
    """A gold extraction surface does not occur verbatim in its sentence."""

    def __init__(self, paper_id: str, index: int, surface: str):
        super().__init__(
            f"paper {paper_id} sentence {index}: surface {surface!r} not found in sentence text"
        )
        self.paper_id = paper_id
        self.index = index


class InsufficientExamples(SciConceptError):
    """A demonstration paper has too few annotated sentences."""

    def __init__(self, paper_id: str, have: int, need: int):
        super().__init__(
            f"demo paper {paper_id} has {have} annotated sentences, need {need}"
        )
        self.paper_id = paper_id


@dataclass(frozen=True)
class GoldPaper:
    """One annotated paper: (sentence, gold extraction set) pairs in file order."""

    paper_id: str
    sentences: tuple[tuple[Sentence, ExtractionSet], ...]


@dataclass(frozen=True)
class FewShotExample:
    """A demonstration pair: sentence text and its target extraction set."""

    sentence_text: str
    target: ExtractionSet


DEFAULT_INSTRUCTION = (
    "Use the following schema to tag the title and abstract of a scientific "
    "paper, as demonstrated in the examples:"
)


@dataclass(frozen=True)
class PromptConfig:
    """Everything that shapes a prompt and the demo/dev split."""

    instruction: str = DEFAULT_INSTRUCTION
    format: ResponseFormat = ResponseFormat.human_readable
    demo_paper_ids: tuple[str, ...] = ()
    sentences_per_demo: int = 3
    example_order: str = "by_paper"  # or "interleaved"
    granularity: str = "sentence"  # or "paragraph"

    def __post_init__(self) -> None:
        if self.sentences_per_demo < 1:
            raise ValueError("sentences_per_demo must be >= 1")
        if self.example_order not in ("by_paper", "interleaved"):
            raise ValueError(f"unknown example_order {self.example_order!r}")
        if self.granularity not in ("sentence", "paragraph"):
            raise ValueError(f"unknown granularity {self.granularity!r}")

    def with_demo_papers(self, paper_ids: Sequence[str]) -> "PromptConfig":
        return replace(self, demo_paper_ids=tuple(paper_ids))


def parse_gold_text(text: str, source: str = "<string>") -> GoldPaper:
    """Parse one gold document: ``#paper <id>`` header plus tagged sentences."""
    paper_id = ""
    pairs: list[tuple[Sentence, ExtractionSet]] = []
    index = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#paper"):
            if paper_id:
                raise EmptyGold(f"{source}:{lineno}: second '#paper' header in one document")
            paper_id = stripped[len("#paper") :].strip()
            if not paper_id:
                raise EmptyGold(f"{source}:{lineno}: '#paper' header without an id")
            continue
        if not paper_id:
            raise EmptyGold(f"{source}:{lineno}: sentence before '#paper' header")
        try:
            tagged = parse_tagged(stripped)
        except MalformedMarkup as exc:
            raise MalformedMarkup(exc.position, f"{source}:{lineno}: {exc.reason}") from None
        sentence = Sentence(paper_id, index, tagged.plain)
        for extraction in tagged.extractions:
            if extraction.surface not in tagged.plain:
                raise SurfaceMismatch(paper_id, index, extraction.surface)
        pairs.append((sentence, tagged.extractions))
        index += 1
    if not paper_id or not pairs:
        raise EmptyGold(f"{source}: no annotated sentences")
    return GoldPaper(paper_id=paper_id, sentences=tuple(pairs))


def load_gold(files: Iterable[str | Path]) -> list[GoldPaper]:
    """Load gold papers from files, one document per file, in the given order."""
    papers = []
    for path in files:
        path = Path(path)
        papers.append(parse_gold_text(path.read_text(encoding="utf-8"), source=str(path)))
    if not papers:
        raise EmptyGold("no gold files given")
    return papers


def load_gold_dir(directory: str | Path) -> list[GoldPaper]:
    """Load every ``*.txt`` gold file in a directory, sorted by name."""
    paths = sorted(Path(directory).glob("*.txt"))
    if not paths:
        raise EmptyGold(f"no gold files in {directory}")
    return load_gold(paths)


def split_demo_dev(
    gold: Sequence[GoldPaper],
    demo_paper_ids: Sequence[str] = (),
    n_demo: int = 3,
) -> tuple[list[GoldPaper], list[GoldPaper]]:
    """Split gold papers into demonstration and development sets.

    With explicit ids, those papers (which must exist) become the demo set;
    otherwise the first n_demo papers do. The sets are disjoint.
    """
    if demo_paper_ids:
        by_id = {paper.paper_id: paper for paper in gold}
        missing = [pid for pid in demo_paper_ids if pid not in by_id]
        if missing:
            raise EmptyGold(f"demo paper ids not in gold set: {missing}")
        demo = [by_id[pid] for pid in demo_paper_ids]
        demo_ids = set(demo_paper_ids)
    else:
        demo = list(gold[:n_demo])
        demo_ids = {paper.paper_id for paper in demo}
    dev = [paper for paper in gold if paper.paper_id not in demo_ids]
    return demo, dev


def select_examples(gold: Sequence[GoldPaper], config: PromptConfig) -> list[FewShotExample]:
    """Pick few-shot examples deterministically from the demo papers.

    Takes the first ``sentences_per_demo`` sentences (by index) with a
    non-empty extraction set from each demo paper; ordering follows
    ``example_order`` (all of one paper first, or round-robin interleaved).
    """
    demo, _ = split_demo_dev(gold, config.demo_paper_ids)
    per_paper: list[list[FewShotExample]] = []
    for paper in demo:
        annotated = [
            FewShotExample(sentence.text, extractions)
            for sentence, extractions in paper.sentences
            if extractions
        ]
        if len(annotated) < config.sentences_per_demo:
            raise InsufficientExamples(paper.paper_id, len(annotated), config.sentences_per_demo)
        per_paper.append(annotated[: config.sentences_per_demo])
    if config.example_order == "interleaved":
        return [
            group[i] for i in range(config.sentences_per_demo) for group in per_paper
        ]
    return [example for group in per_paper for example in group]


def build_prompt(
    schema: SchemaDef,
    examples: Sequence[FewShotExample],
    target: str,
    config: PromptConfig,
) -> str:
    """Assemble the extraction prompt: instruction, schema, examples, target cue.

    Byte-for-byte deterministic for equal inputs; the prompt always ends with
    the bare ``Extractions:`` cue for the target sentence.
    """
    if not target.strip():
        raise ValueError("empty prompt target")
    blocks = [config.instruction, render_schema(schema)]
    for example in examples:
        rendered = render_extractions(example.target, config.format)
        blocks.append(f"Sentence: {example.sentence_text}\nExtractions:\n{rendered}")
    blocks.append(f"Sentence: {target}\nExtractions:")
    return "\n\n".join(blocks)
