// Bootstrap: wire the two tabs, the graph controls, and the query console.

import { ApiClient } from "./api.js";
import { GraphController, QueryController } from "./controllers.js";
import { GraphView, tagLegend } from "./graphview.js";
import { QueryView } from "./queryview.js";
import { clampDepth, MAX_DEPTH } from "./state.js";
import { Tag } from "./types.js";

function byId<T extends HTMLElement>(id: string): T {
  const element = document.getElementById(id);
  if (!element) throw new Error(`missing element #${id}`);
  return element as T;
}

function setupTabs(): void {
  const buttons = Array.from(document.querySelectorAll<HTMLButtonElement>(".tab-button"));
  const panels = Array.from(document.querySelectorAll<HTMLElement>(".tab-panel"));
  for (const button of buttons) {
    button.addEventListener("click", () => {
      for (const other of buttons) other.classList.toggle("active", other === button);
      for (const panel of panels) {
        panel.classList.toggle("hidden", panel.id !== button.dataset.panel);
      }
    });
  }
}

function setupGraphControls(controller: GraphController): void {
  const filters = byId<HTMLElement>("tag-filters");
  for (const { tag, color } of tagLegend()) {
    const label = document.createElement("label");
    label.className = "tag-filter";
    const checkbox = document.createElement("input");
    checkbox.type = "checkbox";
    checkbox.checked = true;
    checkbox.dataset.tag = tag;
    checkbox.addEventListener("change", () => void controller.toggleTag(tag as Tag));
    const swatch = document.createElement("span");
    swatch.className = "swatch";
    swatch.style.backgroundColor = color;
    label.append(checkbox, swatch, document.createTextNode(tag));
    filters.appendChild(label);
  }

  const minWeight = byId<HTMLInputElement>("min-weight");
  minWeight.addEventListener("change", () => {
    void controller.setMinWeight(Number(minWeight.value));
  });

  const depth = byId<HTMLInputElement>("depth-input");
  depth.max = String(MAX_DEPTH);
  depth.addEventListener("change", () => {
    depth.value = String(clampDepth(Number(depth.value)));
    const center = controller.state.center ?? controller.state.highlighted;
    if (center) void controller.explore(center, Number(depth.value));
  });

  byId<HTMLButtonElement>("expand-button").addEventListener("click", () => {
    const center = controller.state.center ?? controller.state.highlighted;
    if (center) void controller.explore(center, clampDepth(Number(depth.value)));
  });
  byId<HTMLButtonElement>("reset-view").addEventListener("click", () => {
    void controller.clearCenter();
  });

  const status = byId<HTMLElement>("graph-status");
  controller.subscribe(() => {
    const { center, depth: hops } = controller.state;
    const scope = center ? `${hops}-hop neighborhood of "${center}"` : "full graph";
    const counts = `${controller.doc.nodes.length} nodes, ${controller.doc.links.length} links`;
    status.textContent = controller.loading ? "Loading…" : `${scope} — ${counts}`;
    const banner = byId<HTMLElement>("graph-error");
    banner.classList.toggle("hidden", !controller.error);
    banner.textContent = controller.error ?? "";
  });
}

function start(): void {
  setupTabs();
  const api = new ApiClient("");
  const graphController = new GraphController(api);
  const queryController = new QueryController(api);
  new GraphView(graphController, byId<HTMLElement>("graph-container"));
  setupGraphControls(graphController);
  new QueryView(queryController, byId<HTMLElement>("query-panel"));
  byId<HTMLElement>("graph-error").addEventListener("click", (event) => {
    (event.currentTarget as HTMLElement).classList.add("hidden");
  });
  void graphController.refresh();
}

document.addEventListener("DOMContentLoaded", start);
