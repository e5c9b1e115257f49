// Wire types for the HTTP API. The explorer never derives topology itself:
// what it displays is exactly what /api/graph returned.

export const ALL_TAGS = [
  "model",
  "task",
  "dataset",
  "field",
  "modality",
  "method",
  "object",
  "property",
  "instrument",
] as const;

export type Tag = (typeof ALL_TAGS)[number];

export interface GraphNode {
  id: string;
  display: string;
  tag: Tag;
  paper_count: number;
}

export interface GraphLink {
  source: string;
  target: string;
  weight: number;
}

export interface GraphDoc {
  nodes: GraphNode[];
  links: GraphLink[];
}

export interface QueryResult {
  columns: string[];
  rows: (string | number | null)[][];
  truncated: boolean;
  row_count: number;
}

export interface ApiErrorBody {
  error: string;
  message: string;
}

export interface StatsDoc {
  papers: number;
  predictions: number;
  runs: Record<string, number>;
  tags: Record<string, number>;
  categories: Record<string, number>;
}
