// Typed API client with stale-response discard. Every fetch gets a sequence
// number per channel; when a response arrives for anything but the newest
// request on its channel, it is dropped instead of applied.

import { ApiErrorBody, GraphDoc, QueryResult, StatsDoc } from "./types.js";

export class ApiError extends Error {
  code: string;
  status: number;

  constructor(status: number, body: ApiErrorBody) {
    super(body.message || body.error || `HTTP ${status}`);
    this.code = body.error || "error";
    this.status = status;
  }
}

export class StaleResponse extends Error {
  constructor() {
    super("stale response discarded");
  }
}

type Fetcher = typeof fetch;

async function parseJson(response: Response): Promise<unknown> {
  const text = await response.text();
  try {
    return JSON.parse(text);
  } catch {
    throw new ApiError(response.status, {
      error: "bad_payload",
      message: `response is not JSON (HTTP ${response.status})`,
    });
  }
}

export class ApiClient {
  private base: string;
  private fetcher: Fetcher;
  private sequences = new Map<string, number>();

  constructor(base = "", fetcher: Fetcher = fetch) {
    this.base = base.replace(/\/$/, "");
    this.fetcher = fetcher;
  }

  /** GET/POST with staleness tracking on the given channel. Rejects with
   * StaleResponse when a newer request was issued on that channel since. */
  private async request<T>(channel: string, path: string, init?: RequestInit): Promise<T> {
    const seq = (this.sequences.get(channel) ?? 0) + 1;
    this.sequences.set(channel, seq);
    const response = await this.fetcher(this.base + path, init);
    if (this.sequences.get(channel) !== seq) {
      throw new StaleResponse();
    }
    const payload = await parseJson(response);
    if (!response.ok) {
      throw new ApiError(response.status, payload as ApiErrorBody);
    }
    return payload as T;
  }

  graph(query: string): Promise<GraphDoc> {
    const path = query ? `/api/graph?${query}` : "/api/graph";
    return this.request<GraphDoc>("graph", path);
  }

  query(sql: string, maxRows?: number): Promise<QueryResult> {
    return this.request<QueryResult>("query", "/api/query", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(maxRows === undefined ? { sql } : { sql, max_rows: maxRows }),
    });
  }

  predefined(name: string, params: Record<string, string>): Promise<QueryResult> {
    const search = new URLSearchParams(params).toString();
    return this.request<QueryResult>("query", `/api/predefined/${name}?${search}`);
  }

  stats(): Promise<StatsDoc> {
    return this.request<StatsDoc>("stats", "/api/stats");
  }

  health(): Promise<{ status: string }> {
    return this.request<{ status: string }>("health", "/api/health");
  }
}
