// View state and the mapping from state to /api/graph request parameters.
// All transitions return new state objects; depth stays within 0..4 and the
// tag filter is always a subset of the nine known tags.

import { ALL_TAGS, Tag } from "./types.js";

export const MAX_DEPTH = 4;

export interface GraphViewState {
  activeTags: ReadonlySet<Tag>;
  highlighted: string | null;
  center: string | null;
  depth: number;
  minWeight: number;
  maxNodes: number;
  runId: string | null;
  category: string | null;
}

export function defaultGraphState(): GraphViewState {
  return {
    activeTags: new Set(ALL_TAGS),
    highlighted: null,
    center: null,
    depth: 1,
    minWeight: 1,
    maxNodes: 500,
    runId: null,
    category: null,
  };
}

export function clampDepth(depth: number): number {
  if (!Number.isFinite(depth)) return 0;
  return Math.max(0, Math.min(MAX_DEPTH, Math.round(depth)));
}

export function toggleTag(state: GraphViewState, tag: Tag): GraphViewState {
  const next = new Set(state.activeTags);
  if (next.has(tag)) {
    next.delete(tag);
  } else {
    next.add(tag);
  }
  return { ...state, activeTags: next };
}

export function setDepth(state: GraphViewState, depth: number): GraphViewState {
  return { ...state, depth: clampDepth(depth) };
}

export function setMinWeight(state: GraphViewState, minWeight: number): GraphViewState {
  return { ...state, minWeight: Math.max(1, Math.round(minWeight) || 1) };
}

export function setCenter(state: GraphViewState, center: string | null): GraphViewState {
  return { ...state, center };
}

export function setHighlight(state: GraphViewState, node: string | null): GraphViewState {
  return { ...state, highlighted: node };
}

/** Query string for /api/graph. Omits the tags parameter when every tag is
 * active (the unfiltered graph) and center/depth when no center is set. */
export function buildGraphQuery(state: GraphViewState): string {
  const params = new URLSearchParams();
  if (state.activeTags.size < ALL_TAGS.length) {
    const ordered = ALL_TAGS.filter((tag) => state.activeTags.has(tag));
    params.set("tags", ordered.join(","));
  }
  if (state.minWeight !== 1) params.set("min_weight", String(state.minWeight));
  if (state.maxNodes !== 500) params.set("max_nodes", String(state.maxNodes));
  if (state.center !== null) {
    params.set("center", state.center);
    params.set("depth", String(clampDepth(state.depth)));
  }
  if (state.runId) params.set("run_id", state.runId);
  if (state.category) params.set("category", state.category);
  return params.toString();
}

export interface PredefinedSpec {
  name: string;
  label: string;
  params: { key: string; label: string; placeholder: string }[];
}

export const PREDEFINED_QUERIES: PredefinedSpec[] = [
  {
    name: "new_datasets_since",
    label: "New datasets in a field since a date",
    params: [
      { key: "category", label: "Category prefix", placeholder: "physics.flu-dyn" },
      { key: "since", label: "Since (YYYY-MM-DD)", placeholder: "2020-01-01" },
    ],
  },
  {
    name: "datasets_with_concept",
    label: "Datasets in papers mentioning a concept",
    params: [
      { key: "category", label: "Category prefix", placeholder: "q-bio" },
      { key: "pattern", label: "Concept contains", placeholder: "PDE" },
    ],
  },
  {
    name: "modality_distribution",
    label: "Modality usage split (only A / only B / both / neither)",
    params: [
      { key: "category", label: "Category prefix", placeholder: "astro-ph" },
      { key: "term_a", label: "Modality A contains", placeholder: "image" },
      { key: "term_b", label: "Modality B contains", placeholder: "spectra" },
    ],
  },
];

export interface QueryConsoleState {
  sql: string;
  busy: boolean;
  error: string | null;
  result: import("./types.js").QueryResult | null;
}

export function defaultConsoleState(): QueryConsoleState {
  return { sql: "", busy: false, error: null, result: null };
}
