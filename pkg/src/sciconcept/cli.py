"""Operator command line: ingest, extract, reparse, eval, serve, export-graph,
rake-compare.

Each command prints a one-line machine-parseable summary on success and exits
0; usage errors exit 2 and operational errors exit 1 with a diagnostic.
Settings shared between commands live in an INI config file (sections
``[prompt]``, ``[backend]``, ``[pipeline]``, ``[server]``), always overridable
by flags.
"""

from __future__ import annotations

import configparser
import json
import logging
import os
import sys
from pathlib import Path

import click

from . import graph as graph_mod
from . import metrics as metrics_mod
from . import pipeline as pipeline_mod
from . import rake as rake_mod
from . import store as store_mod
from .annotations import Extraction, ExtractionSet, ResponseFormat
from .corpus import load_abbreviations, load_metadata
from .metrics import AlignmentError
from .errors import SciConceptError
from .gateway import Backend, BackendConfig, HttpBackend, StubBackend
from .graph import GraphOptions
from .pipeline import PipelineConfig
from .prompting import PromptConfig, load_gold_dir, select_examples, split_demo_dev
from .schema import SchemaDef, default_schema, load_schema, tag_from_label
from .server import ApiConfig, serve as serve_app

log = logging.getLogger(__name__)


def _read_config(path: str | None) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    if path:
        if not Path(path).exists():
            raise click.ClickException(f"config file {path} does not exist")
        parser.read(path, encoding="utf-8")
    return parser


def _prompt_config(cfg: configparser.ConfigParser, format_override: str | None) -> PromptConfig:
    section = cfg["prompt"] if cfg.has_section("prompt") else {}
    kwargs: dict = {}
    if "instruction" in section:
        kwargs["instruction"] = section["instruction"]
    fmt = format_override or section.get("format")
    if fmt:
        kwargs["format"] = ResponseFormat(fmt if fmt != "human_readable" else "human")
    if "demo_papers" in section:
        kwargs["demo_paper_ids"] = tuple(
            p.strip() for p in section["demo_papers"].split(",") if p.strip()
        )
    if "sentences_per_demo" in section:
        kwargs["sentences_per_demo"] = int(section["sentences_per_demo"])
    if "example_order" in section:
        kwargs["example_order"] = section["example_order"]
    if "granularity" in section:
        kwargs["granularity"] = section["granularity"]
    return PromptConfig(**kwargs)


def _backend_from_spec(spec: str, cfg: configparser.ConfigParser, gold_echo_builder=None) -> Backend:
    if spec == "live":
        if not cfg.has_section("backend"):
            raise click.ClickException("backend 'live' needs a [backend] config section")
        section = cfg["backend"]
        if "endpoint_url" not in section or "model_name" not in section:
            raise click.ClickException("[backend] needs endpoint_url and model_name")
        return HttpBackend(
            BackendConfig(
                endpoint_url=section["endpoint_url"],
                model_name=section["model_name"],
                auth_token_env=section.get("auth_token_env", "LLM_API_TOKEN"),
                timeout=section.getfloat("timeout", 30.0),
                max_retries=section.getint("max_retries", 3),
                max_in_flight=section.getint("max_in_flight", 4),
                raw_completion=section.getboolean("raw_completion", False),
            )
        )
    if spec == "stub:gold-echo":
        if gold_echo_builder is None:
            raise click.ClickException("backend 'stub:gold-echo' requires --gold")
        return gold_echo_builder()
    if spec.startswith("stub:"):
        fixture = spec[len("stub:") :]
        if not Path(fixture).exists():
            raise click.ClickException(f"stub fixture {fixture} does not exist")
        return StubBackend.from_file(fixture)
    raise click.ClickException(f"unknown backend {spec!r} (use live, stub:<fixture>, stub:gold-echo)")


def _load_schema_arg(path: str | None) -> SchemaDef:
    return load_schema(path) if path else default_schema()


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Concept extraction over paper titles and abstracts."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )


@main.command()
@click.argument("metadata", type=click.Path(exists=True))
@click.option("--db", required=True, type=click.Path(), help="Database file path.")
def ingest(metadata: str, db: str) -> None:
    """Load a JSON-lines metadata file into the papers table."""
    try:
        loaded = load_metadata(metadata)
        handle = store_mod.init_db(db)
        inserted, updated = store_mod.upsert_papers(handle, loaded.records)
        handle.close()
    except SciConceptError as exc:
        raise click.ClickException(str(exc)) from None
    for warning in loaded.warnings:
        log.warning("%s", warning)
    click.echo(f"ingested={inserted + updated} skipped={loaded.skipped}")


@main.command()
@click.option("--db", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(), help="INI config file.")
@click.option("--backend", "backend_spec", required=True,
              help="live | stub:<fixture.json> | stub:gold-echo")
@click.option("--run-id", required=True)
@click.option("--gold", "gold_dir", type=click.Path(exists=True),
              help="Gold annotation directory (for few-shot examples).")
@click.option("--schema", "schema_path", type=click.Path(exists=True),
              help="Schema definition override file.")
@click.option("--format", "format_", type=click.Choice(["human", "json"]))
@click.option("--category", help="Only extract papers whose primary category has this prefix.")
@click.option("--limit", type=int, help="Only extract the first N papers.")
@click.option("--max-workers", type=int, default=4, show_default=True)
def extract(db, config_path, backend_spec, run_id, gold_dir, schema_path, format_,
            category, limit, max_workers) -> None:
    """Run the extraction pipeline over ingested papers."""
    cfg = _read_config(config_path)
    try:
        schema = _load_schema_arg(schema_path)
        prompt_cfg = _prompt_config(cfg, format_)
        examples = ()
        gold = None
        if gold_dir:
            gold = load_gold_dir(gold_dir)
            if not prompt_cfg.demo_paper_ids:
                demo, _ = split_demo_dev(gold)
                prompt_cfg = prompt_cfg.with_demo_papers([p.paper_id for p in demo])
            examples = tuple(select_examples(gold, prompt_cfg))
        pipeline_section = cfg["pipeline"] if cfg.has_section("pipeline") else {}
        abbreviations = None
        if "abbreviations" in pipeline_section:
            abbreviations = load_abbreviations(pipeline_section["abbreviations"])
        run_cfg = PipelineConfig(
            run_id=run_id,
            prompt=prompt_cfg,
            schema=schema,
            examples=examples,
            max_tokens=int(pipeline_section.get("max_tokens", 512)),
            temperature=float(pipeline_section.get("temperature", 0.0)),
            max_workers=max_workers,
            abbreviations=abbreviations,
        )

        def gold_echo_builder():
            if gold is None:
                raise click.ClickException("backend 'stub:gold-echo' requires --gold")
            return pipeline_mod.gold_echo_backend(gold, schema, run_cfg)

        backend = _backend_from_spec(backend_spec, cfg, gold_echo_builder)
        handle = store_mod.init_db(db)
        records = store_mod.load_papers(handle, category_prefix=category, limit=limit)
        summary = pipeline_mod.run_corpus(records, run_cfg, backend, handle)
        handle.close()
    except SciConceptError as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(
        f"run={summary.run_id} papers={summary.papers_succeeded} "
        f"skipped={summary.papers_skipped} failed={summary.papers_failed} "
        f"ok={summary.sentences_ok} parse_empty={summary.sentences_parse_empty} "
        f"sentence_failures={summary.sentences_failed}"
    )


@main.command("eval")
@click.option("--gold", "gold_dir", required=True, type=click.Path(exists=True))
@click.option("--db", required=True, type=click.Path(exists=True))
@click.option("--run-id", required=True)
@click.option("--format", "format_", type=click.Choice(["human", "json"]), default="human",
              show_default=True, help="Format label recorded in the report.")
@click.option("--config", "config_path", type=click.Path(), help="INI config file (demo split).")
@click.option("--out", type=click.Path(), help="Also write the JSON report to this file.")
def eval_cmd(gold_dir, db, run_id, format_, config_path, out) -> None:
    """Score stored predictions for a run against gold annotations (dev split)."""
    cfg = _read_config(config_path)
    try:
        gold = load_gold_dir(gold_dir)
        prompt_cfg = _prompt_config(cfg, format_)
        _, dev = split_demo_dev(gold, prompt_cfg.demo_paper_ids)
        handle = store_mod.open_store(db)
        predictions = {
            paper.paper_id: _predicted_sets(handle, paper.paper_id, run_id, len(paper.sentences))
            for paper in dev
        }
        report = metrics_mod.evaluate_dev(
            predictions, dev, format=prompt_cfg.format, run_id=run_id
        )
    except SciConceptError as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(report.to_text())
    click.echo(json.dumps(report.to_dict(), indent=2))
    if out:
        Path(out).write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    click.echo(
        f"papers={len(report.per_paper)} "
        f"precision={report.precision_mean:.4f}±{report.precision_std:.4f} "
        f"recall={report.recall_mean:.4f}±{report.recall_std:.4f} "
        f"f1={report.f1_mean:.4f}±{report.f1_std:.4f}"
    )


def _predicted_sets(handle, paper_id: str, run_id: str, n_sentences: int) -> list[ExtractionSet]:
    """Rebuild per-sentence extraction sets for one paper from stored rows."""
    conn = handle.connect_readonly()
    try:
        rows = conn.execute(
            "SELECT sentence_index, tag, concept FROM predictions "
            "WHERE paper_id = ? AND run_id = ? ORDER BY prediction_id",
            (paper_id, run_id),
        ).fetchall()
    finally:
        conn.close()
    sets: list[list] = [[] for _ in range(n_sentences)]
    for index, tag, concept in rows:
        if not 0 <= index < n_sentences:
            raise AlignmentError(paper_id, f"stored sentence index {index} out of range")
        sets[index].append(Extraction(tag_from_label(tag), concept))
    return [ExtractionSet(items) for items in sets]


@main.command()
@click.option("--db", required=True, type=click.Path(exists=True))
@click.option("--run-id", required=True, help="Source run whose response archive to re-parse.")
@click.option("--into-run", required=True, help="Run id that receives the re-parsed rows.")
@click.option("--format", "format_", required=True, type=click.Choice(["human", "json"]))
@click.option("--archive", "archive_path", type=click.Path(exists=True),
              help="Archive file (defaults to the source run's).")
def reparse(db, run_id, into_run, format_, archive_path) -> None:
    """Re-parse a run's archived raw responses under a different format."""
    archive = Path(archive_path) if archive_path else pipeline_mod.default_archive_path(db, run_id)
    if not archive.exists():
        raise click.ClickException(f"no response archive at {archive}")
    try:
        handle = store_mod.init_db(db)
        summary = pipeline_mod.reparse_archive(
            archive, ResponseFormat(format_), into_run, handle
        )
        handle.close()
    except SciConceptError as exc:
        raise click.ClickException(str(exc)) from None
    click.echo(
        f"run={summary.run_id} papers={summary.papers_succeeded} "
        f"ok={summary.sentences_ok} parse_empty={summary.sentences_parse_empty} "
        f"sentence_failures={summary.sentences_failed}"
    )


@main.command()
@click.option("--config", "config_path", type=click.Path(), help="INI config file ([server]).")
@click.option("--db", type=click.Path(exists=True), help="Database file (overrides config).")
@click.option("--host")
@click.option("--port", type=int)
@click.option("--static", "static_dir", type=click.Path(), help="UI bundle directory.")
def serve(config_path, db, host, port, static_dir) -> None:
    """Serve the HTTP API (and the UI bundle, when given) over a database.

    Precedence per setting: flag, then SCICONCEPT_* environment variable,
    then the [server] config section, then the default.
    """
    cfg = _read_config(config_path)
    section = cfg["server"] if cfg.has_section("server") else {}

    def setting(flag, env_key: str, config_key: str, default=None):
        return flag or os.environ.get(env_key) or section.get(config_key) or default

    db_path = setting(db, "SCICONCEPT_DB", "db")
    if not db_path:
        raise click.ClickException(
            "a database path is required (--db, SCICONCEPT_DB, or [server] db)"
        )
    cors = tuple(
        origin.strip()
        for origin in str(setting(None, "SCICONCEPT_CORS_ORIGINS", "cors_origins", "")).split(",")
        if origin.strip()
    )
    try:
        api_config = ApiConfig(
            db_path=db_path,
            host=setting(host, "SCICONCEPT_HOST", "host", "127.0.0.1"),
            port=int(setting(port, "SCICONCEPT_PORT", "port", 8000)),
            max_rows=int(setting(None, "SCICONCEPT_MAX_ROWS", "max_rows", 1000)),
            query_timeout=float(setting(None, "SCICONCEPT_QUERY_TIMEOUT", "query_timeout", 5.0)),
            static_dir=setting(static_dir, "SCICONCEPT_STATIC_DIR", "static_dir"),
            cors_origins=cors,
        )
        click.echo(f"serving={api_config.host}:{api_config.port} db={api_config.db_path}")
        serve_app(api_config)
    except (SciConceptError, ValueError) as exc:
        raise click.ClickException(str(exc)) from None


@main.command("export-graph")
@click.option("--db", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--run-id")
@click.option("--category")
@click.option("--tags", help="Comma-separated tag filter.")
@click.option("--min-weight", type=int, default=1, show_default=True)
@click.option("--max-nodes", type=int, default=500, show_default=True)
@click.option("--center", help="Restrict to the n-hop neighborhood of this node.")
@click.option("--depth", type=int, default=1, show_default=True)
def export_graph(db, out, run_id, category, tags, min_weight, max_nodes, center, depth) -> None:
    """Build the co-occurrence graph and write the force-layout JSON document."""
    try:
        handle = store_mod.open_store(db)
        snapshot = graph_mod.build_graph(
            handle,
            GraphOptions(
                run_id=run_id, category=category,
                min_edge_weight=min_weight, max_nodes=max_nodes,
            ),
        )
        if tags:
            wanted = [tag_from_label(part) for part in tags.split(",") if part.strip()]
            snapshot = graph_mod.filter_by_tags(snapshot, wanted)
        if center:
            snapshot = graph_mod.neighborhood(snapshot, center, depth)
    except SciConceptError as exc:
        raise click.ClickException(str(exc)) from None
    document = graph_mod.export_json(snapshot)
    Path(out).write_text(graph_mod.dumps_export(document), encoding="utf-8")
    click.echo(f"nodes={len(document['nodes'])} links={len(document['links'])} out={out}")


@main.command("rake-compare")
@click.option("--db", required=True, type=click.Path(exists=True))
@click.option("--domains", required=True,
              help="Comma-separated category prefixes, e.g. astro-ph,q-bio.")
@click.option("--run-id", help="Restrict tagged concepts to one run.")
@click.option("--stopwords", "stopwords_path", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), help="Also write the JSON report to this file.")
def rake_compare(db, domains, run_id, stopwords_path, out) -> None:
    """Compare RAKE keyword counts and tag distributions across domains."""
    stop = rake_mod.load_stopwords(stopwords_path) if stopwords_path else rake_mod.default_stopwords()
    prefixes = [d.strip() for d in domains.split(",") if d.strip()]
    try:
        handle = store_mod.open_store(db)
        rake_results: dict[str, list] = {}
        schema_results: dict[str, list[ExtractionSet]] = {}
        paper_domain: dict[str, str] = {}
        distributions = []
        for prefix in prefixes:
            records = store_mod.load_papers(handle, category_prefix=prefix)
            if not records:
                raise click.ClickException(f"no papers with category prefix {prefix!r}")
            rows = store_mod.iter_prediction_rows(handle, run_id=run_id, category_prefix=prefix)
            by_paper: dict[str, list] = {record.paper_id: [] for record in records}
            domain_tags = []
            for paper_id, tag, concept, _norm in rows:
                by_paper[paper_id].append((tag, concept))
                domain_tags.append(tag)
            for record in records:
                paper_domain[record.paper_id] = prefix
                rake_results[record.paper_id] = rake_mod.rake_extract(
                    f"{record.title}. {record.abstract}", stop
                )
                schema_results[record.paper_id] = [
                    ExtractionSet(
                        Extraction(tag_from_label(tag), concept)
                        for tag, concept in by_paper[record.paper_id]
                    )
                ]
            if domain_tags:
                distributions.append(
                    rake_mod.tag_distribution((tag_from_label(t) for t in domain_tags), prefix)
                )
        comparison = rake_mod.compare_counts(rake_results, schema_results, paper_domain)
    except SciConceptError as exc:
        raise click.ClickException(str(exc)) from None

    click.echo(f"{'domain':24}{'rake_avg':>10}{'ours_avg':>10}{'ratio':>8}")
    for row in comparison:
        ratio = f"{row.ratio:.2f}" if row.ratio is not None else "n/a"
        click.echo(f"{row.domain:24}{row.rake_avg:>10.1f}{row.ours_avg:>10.1f}{ratio:>8}")
    for dist in distributions:
        ordered = sorted(dist.percentages.items(), key=lambda kv: -kv[1])
        rendered = ", ".join(f"{tag.value} ({pct:.1f}%)" for tag, pct in ordered)
        click.echo(f"{dist.domain}: {rendered}")
    payload = {
        "comparison": [
            {"domain": r.domain, "rake_avg": r.rake_avg, "ours_avg": r.ours_avg, "ratio": r.ratio}
            for r in comparison
        ],
        "tag_distribution": [
            {"domain": d.domain, "percentages": {t.value: p for t, p in d.percentages.items()}}
            for d in distributions
        ],
    }
    click.echo(json.dumps(payload, indent=2))
    if out:
        Path(out).write_text(json.dumps(payload, indent=2), encoding="utf-8")
    overall = comparison[-1]
    ratio = f"{overall.ratio:.2f}" if overall.ratio is not None else "n/a"
    click.echo(f"domains={len(prefixes)} rake_avg={overall.rake_avg:.1f} "
               f"ours_avg={overall.ours_avg:.1f} ratio={ratio}")


if __name__ == "__main__":
    main()
