"""Co-occurrence concept graph: build from prediction rows, filter, export.

Nodes are normalized concepts; an edge's weight counts the distinct papers in
which both endpoints occur (concepts are deduplicated per paper first, so a
concept repeated across sentences contributes once). Graphs are immutable
snapshots; filtering and neighborhood queries return new snapshots.
"""

from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import SciConceptError
from .schema import TagType, tag_rank
from .store import StoreHandle, iter_prediction_rows


class UnknownNode(SciConceptError):
    """The requested center node is not in the graph."""

    def __init__(self, key: str):
        super().__init__(f"no node {key!r} in graph")
        self.key = key


@dataclass(frozen=True)
class ConceptNode:
    """One concept: normalized key, preferred display spelling, majority tag."""

    key: str
    display: str
    tag: TagType
    paper_count: int


@dataclass(frozen=True)
class GraphOptions:
    """Build-time filters; None disables a bound."""

    run_id: str | None = None
    category: str | None = None
    min_edge_weight: int = 1
    min_paper_count: int = 1
    max_nodes: int | None = 500


@dataclass(frozen=True)
class ConceptGraph:
    """Immutable snapshot: nodes by key, edge weights by sorted key pair."""

    nodes: dict[str, ConceptNode]
    edges: dict[tuple[str, str], int]
    options: GraphOptions = field(default_factory=GraphOptions)

    def adjacency(self) -> dict[str, set[str]]:
        adj: dict[str, set[str]] = {key: set() for key in self.nodes}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj


def _edge_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


def build_graph(handle: StoreHandle, options: GraphOptions | None = None) -> ConceptGraph:
    """Build the co-occurrence graph from stored prediction rows.

    Each paper's distinct concept set contributes +1 to every unordered pair
    (a clique per paper). Nodes and edges under the configured minimums are
    pruned after counting; the max_nodes cap keeps the highest-paper_count
    nodes (ties by key) and their induced edges.
    """
    options = options or GraphOptions()
    rows = iter_prediction_rows(handle, run_id=options.run_id, category_prefix=options.category)

    per_paper: dict[str, set[str]] = {}
    surfaces: dict[str, Counter[str]] = {}
    tag_votes: dict[str, Counter[TagType]] = {}
    for paper_id, tag, concept, concept_norm in rows:
        per_paper.setdefault(paper_id, set()).add(concept_norm)
        surfaces.setdefault(concept_norm, Counter())[concept] += 1
        tag_votes.setdefault(concept_norm, Counter())[TagType(tag)] += 1

    paper_counts: Counter[str] = Counter()
    edge_weights: Counter[tuple[str, str]] = Counter()
    for concepts in per_paper.values():
        ordered = sorted(concepts)
        paper_counts.update(ordered)
        for i, a in enumerate(ordered):
            for b in ordered[i + 1 :]:
                edge_weights[_edge_key(a, b)] += 1

    keys = [k for k, n in paper_counts.items() if n >= options.min_paper_count]
    if options.max_nodes is not None and len(keys) > options.max_nodes:
        keys.sort(key=lambda k: (-paper_counts[k], k))
        keys = keys[: options.max_nodes]
    keep = set(keys)

    nodes = {key: _make_node(key, paper_counts[key], surfaces[key], tag_votes[key]) for key in keep}
    edges = {
        pair: weight
        for pair, weight in edge_weights.items()
        if weight >= options.min_edge_weight and pair[0] in keep and pair[1] in keep
    }
    return ConceptGraph(nodes=nodes, edges=edges, options=options)


def _make_node(
    key: str, paper_count: int, spellings: Counter[str], votes: Counter[TagType]
) -> ConceptNode:
    display = min(spellings.items(), key=lambda kv: (-kv[1], kv[0]))[0]
    tag = min(votes.items(), key=lambda kv: (-kv[1], tag_rank(kv[0])))[0]
    return ConceptNode(key=key, display=display, tag=tag, paper_count=paper_count)


def filter_by_tags(graph: ConceptGraph, tags: Iterable[TagType]) -> ConceptGraph:
    """Induced subgraph on nodes whose tag is in the given set; weights unchanged."""
    wanted = set(tags)
    nodes = {key: node for key, node in graph.nodes.items() if node.tag in wanted}
    edges = {
        pair: weight
        for pair, weight in graph.edges.items()
        if pair[0] in nodes and pair[1] in nodes
    }
    return ConceptGraph(nodes=nodes, edges=edges, options=graph.options)


def neighborhood(graph: ConceptGraph, center: str, depth: int) -> ConceptGraph:
    """Induced subgraph on nodes within ``depth`` unweighted hops of center."""
    if center not in graph.nodes:
        raise UnknownNode(center)
    if depth < 0:
        raise ValueError("depth must be non-negative")
    adjacency = graph.adjacency()
    reached = {center}
    frontier = deque([(center, 0)])
    while frontier:
        key, dist = frontier.popleft()
        if dist == depth:
            continue
        for neighbor in adjacency[key]:
            if neighbor not in reached:
                reached.add(neighbor)
                frontier.append((neighbor, dist + 1))
    nodes = {key: graph.nodes[key] for key in reached}
    edges = {
        pair: weight
        for pair, weight in graph.edges.items()
        if pair[0] in reached and pair[1] in reached
    }
    return ConceptGraph(nodes=nodes, edges=edges, options=graph.options)


def export_json(graph: ConceptGraph) -> dict:
    """Force-layout export document: ``{nodes: [...], links: [...]}``.

    Nodes are sorted by descending paper_count then id; links by descending
    weight then endpoint ids, so the document is deterministic.
    """
    nodes = [
        {
            "id": node.key,
            "display": node.display,
            "tag": node.tag.value,
            "paper_count": node.paper_count,
        }
        for node in sorted(graph.nodes.values(), key=lambda n: (-n.paper_count, n.key))
    ]
    links = [
        {"source": a, "target": b, "weight": weight}
        for (a, b), weight in sorted(graph.edges.items(), key=lambda kv: (-kv[1], kv[0]))
    ]
    return {"nodes": nodes, "links": links}


def dumps_export(document: Mapping) -> str:
    """Canonical JSON serialization of an export document.

    The HTTP API and the CLI exporter both use this, so their bytes agree
    with the in-process export for identical parameters.
    """
    return json.dumps(document, ensure_ascii=False, separators=(",", ":"))
