// DOM-free application logic: the graph store and the query console store.
// Views subscribe and render exactly what the stores hold; integration tests
// drive the stores directly and diff their contents against the API.

import { ApiClient, ApiError, StaleResponse } from "./api.js";
import {
  GraphViewState,
  QueryConsoleState,
  buildGraphQuery,
  clampDepth,
  defaultConsoleState,
  defaultGraphState,
  setCenter,
  setDepth,
  setHighlight,
  setMinWeight,
  toggleTag,
} from "./state.js";
import { GraphDoc, Tag } from "./types.js";

type Listener = () => void;

export class GraphController {
  state: GraphViewState = defaultGraphState();
  doc: GraphDoc = { nodes: [], links: [] };
  error: string | null = null;
  loading = false;

  private api: ApiClient;
  private listeners: Listener[] = [];

  constructor(api: ApiClient) {
    this.api = api;
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  /** Fetch the graph for the current state and replace the displayed doc. */
  async refresh(): Promise<void> {
    this.loading = true;
    this.notify();
    try {
      this.doc = await this.api.graph(buildGraphQuery(this.state));
      this.error = null;
    } catch (err) {
      if (err instanceof StaleResponse) return; // a newer refresh is in flight
      this.error = err instanceof Error ? err.message : String(err);
      if (err instanceof ApiError && err.code === "unknown_node") {
        // dismissible banner case: clear the bad center but keep the graph
        this.state = setCenter(this.state, null);
      }
    } finally {
      this.loading = false;
      this.notify();
    }
  }

  async apply(state: GraphViewState): Promise<void> {
    this.state = { ...state, depth: clampDepth(state.depth) };
    await this.refresh();
  }

  async toggleTag(tag: Tag): Promise<void> {
    await this.apply(toggleTag(this.state, tag));
  }

  async setMinWeight(minWeight: number): Promise<void> {
    await this.apply(setMinWeight(this.state, minWeight));
  }

  /** Depth-based exploration: recenter on a node and fetch its n-hop ball. */
  async explore(center: string, depth: number): Promise<void> {
    await this.apply(setDepth(setCenter(this.state, center), depth));
  }

  async clearCenter(): Promise<void> {
    await this.apply(setCenter(this.state, null));
  }

  highlight(node: string | null): void {
    this.state = setHighlight(this.state, node);
    this.notify();
  }

  nodeIds(): string[] {
    return this.doc.nodes.map((node) => node.id).sort();
  }

  linkIds(): string[] {
    return this.doc.links.map((link) => `${link.source}--${link.target}`).sort();
  }

  atNodeCap(): boolean {
    return this.doc.nodes.length >= this.state.maxNodes;
  }
}

export class QueryController {
  state: QueryConsoleState = defaultConsoleState();

  private api: ApiClient;
  private listeners: Listener[] = [];

  constructor(api: ApiClient) {
    this.api = api;
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  /** Run free-form SQL; at most one request is in flight at a time. */
  async runSql(sql: string): Promise<void> {
    if (this.state.busy || !sql.trim()) return;
    await this.execute(() => this.api.query(sql));
  }

  async runPredefined(name: string, params: Record<string, string>): Promise<void> {
    if (this.state.busy) return;
    await this.execute(() => this.api.predefined(name, params));
  }

  private async execute(call: () => Promise<QueryConsoleState["result"]>): Promise<void> {
    this.state = { ...this.state, busy: true, error: null };
    this.notify();
    try {
      const result = await call();
      this.state = { ...this.state, busy: false, result, error: null };
    } catch (err) {
      if (err instanceof StaleResponse) {
        this.state = { ...this.state, busy: false };
      } else {
        const message = err instanceof Error ? err.message : String(err);
        this.state = { ...this.state, busy: false, error: message };
      }
    }
    this.notify();
  }
}
