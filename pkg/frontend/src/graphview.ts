// d3-force rendering of the graph store. The view draws exactly the nodes
// and links the store holds; on updates the simulation restarts with prior
// positions as seeds so filtered views keep visual continuity.

import type { Simulation, SimulationLinkDatum, SimulationNodeDatum } from "d3";
import { GraphController } from "./controllers.js";
import { ALL_TAGS, GraphNode, Tag } from "./types.js";

declare const d3: typeof import("d3");

interface SimNode extends SimulationNodeDatum, GraphNode {}

interface SimLink extends SimulationLinkDatum<SimNode> {
  weight: number;
}

export const TAG_COLORS: Record<Tag, string> = {
  model: "#4e79a7",
  task: "#f28e2c",
  dataset: "#e15759",
  field: "#76b7b2",
  modality: "#59a14f",
  method: "#edc949",
  object: "#af7aa1",
  property: "#ff9da7",
  instrument: "#9c755f",
};

function radius(node: GraphNode): number {
  return 4 + 2.5 * Math.sqrt(node.paper_count);
}

export class GraphView {
  private controller: GraphController;
  private svg: any;
  private zoomLayer: any;
  private linkLayer: any;
  private nodeLayer: any;
  private labelLayer: any;
  private tooltip: HTMLElement;
  private emptyState: HTMLElement;
  private capWarning: HTMLElement;
  private simulation: Simulation<SimNode, SimLink>;
  private positions = new Map<string, { x: number; y: number }>();
  private lastDoc: unknown = null;

  constructor(controller: GraphController, container: HTMLElement) {
    this.controller = controller;
    this.svg = d3
      .select(container)
      .append("svg")
      .attr("class", "graph-canvas")
      .attr("width", "100%")
      .attr("height", "100%");
    this.zoomLayer = this.svg.append("g");
    this.linkLayer = this.zoomLayer.append("g").attr("stroke", "#999");
    this.nodeLayer = this.zoomLayer.append("g");
    this.labelLayer = this.zoomLayer.append("g");

    this.svg.call(
      d3
        .zoom()
        .scaleExtent([0.2, 8])
        .on("zoom", (event: any) => this.zoomLayer.attr("transform", event.transform)) as any
    );
    this.svg.on("click", () => this.controller.highlight(null));

    this.tooltip = document.createElement("div");
    this.tooltip.className = "tooltip hidden";
    container.appendChild(this.tooltip);

    this.emptyState = document.createElement("div");
    this.emptyState.className = "empty-state hidden";
    this.emptyState.textContent = "No nodes match the current filters.";
    container.appendChild(this.emptyState);

    this.capWarning = document.createElement("div");
    this.capWarning.className = "cap-warning hidden";
    container.appendChild(this.capWarning);

    this.simulation = d3
      .forceSimulation<SimNode>()
      .force("charge", d3.forceManyBody().strength(-120))
      .force("center", d3.forceCenter(0, 0))
      .force("collide", d3.forceCollide<SimNode>().radius((node) => radius(node) + 2))
      .on("tick", () => this.tick());

    const rect = container.getBoundingClientRect();
    this.svg.attr("viewBox", `${-rect.width / 2} ${-rect.height / 2} ${rect.width} ${rect.height}`);

    controller.subscribe(() => this.render());
  }

  private tick(): void {
    this.linkLayer
      .selectAll("line")
      .attr("x1", (link: any) => link.source.x)
      .attr("y1", (link: any) => link.source.y)
      .attr("x2", (link: any) => link.target.x)
      .attr("y2", (link: any) => link.target.y);
    this.nodeLayer
      .selectAll("circle")
      .attr("cx", (node: any) => node.x)
      .attr("cy", (node: any) => node.y);
    this.labelLayer
      .selectAll("text")
      .attr("x", (node: any) => node.x)
      .attr("y", (node: any) => node.y - radius(node) - 4);
  }

  /** 1-hop neighbor ids of the highlighted node, from the displayed links only. */
  private emphasized(): Set<string> | null {
    const highlighted = this.controller.state.highlighted;
    if (!highlighted) return null;
    const keep = new Set([highlighted]);
    for (const link of this.controller.doc.links) {
      if (link.source === highlighted) keep.add(link.target);
      if (link.target === highlighted) keep.add(link.source);
    }
    return keep;
  }

  render(): void {
    const doc = this.controller.doc;
    if (doc === this.lastDoc) {
      // highlight or loading toggles: restyle without restarting the layout
      this.applyEmphasis();
      return;
    }
    this.lastDoc = doc;
    this.emptyState.classList.toggle("hidden", doc.nodes.length > 0);
    if (this.controller.atNodeCap()) {
      this.capWarning.textContent =
        `Showing the ${this.controller.state.maxNodes} most frequent concepts - ` +
        "narrow the view with tag filters or a neighborhood.";
      this.capWarning.classList.remove("hidden");
    } else {
      this.capWarning.classList.add("hidden");
    }

    for (const node of this.simulation.nodes()) {
      if (node.x !== undefined && node.y !== undefined) {
        this.positions.set(node.id, { x: node.x, y: node.y });
      }
    }
    const nodes: SimNode[] = doc.nodes.map((node) => ({
      ...node,
      ...this.positions.get(node.id),
    }));
    const links: SimLink[] = doc.links.map((link) => ({ ...link }));
    const maxWeight = Math.max(1, ...doc.links.map((link) => link.weight));

    const nodeSel = this.nodeLayer
      .selectAll("circle")
      .data(nodes, (node: any) => node.id)
      .join("circle")
      .attr("r", (node: SimNode) => radius(node))
      .attr("fill", (node: SimNode) => TAG_COLORS[node.tag] ?? "#888")
      .attr("stroke", "#fff")
      .attr("stroke-width", 1)
      .style("cursor", "pointer");

    nodeSel
      .on("mouseover", (event: MouseEvent, node: SimNode) => this.showTooltip(event, node))
      .on("mousemove", (event: MouseEvent, node: SimNode) => this.showTooltip(event, node))
      .on("mouseout", () => this.tooltip.classList.add("hidden"))
      .on("click", (event: MouseEvent, node: SimNode) => {
        event.stopPropagation();
        this.controller.highlight(
          this.controller.state.highlighted === node.id ? null : node.id
        );
      })
      .on("dblclick", (event: MouseEvent, node: SimNode) => {
        event.stopPropagation();
        void this.controller.explore(node.id, this.controller.state.depth);
      })
      .call(
        d3
          .drag<SVGCircleElement, SimNode>()
          .on("start", (event: any, node: SimNode) => {
            if (!event.active) this.simulation.alphaTarget(0.3).restart();
            node.fx = node.x;
            node.fy = node.y;
          })
          .on("drag", (event: any, node: SimNode) => {
            node.fx = event.x;
            node.fy = event.y;
          })
          .on("end", (event: any, node: SimNode) => {
            if (!event.active) this.simulation.alphaTarget(0);
            node.fx = null;
            node.fy = null;
          }) as any
      );

    this.linkLayer
      .selectAll("line")
      .data(links, (link: any) => `${link.source.id ?? link.source}--${link.target.id ?? link.target}`)
      .join("line")
      .attr("stroke-width", (link: SimLink) => 0.5 + 2.5 * (link.weight / maxWeight));

    const labelNodes = nodes
      .slice()
      .sort((a, b) => b.paper_count - a.paper_count)
      .slice(0, 25);
    this.labelLayer
      .selectAll("text")
      .data(labelNodes, (node: any) => node.id)
      .join("text")
      .attr("class", "node-label")
      .attr("text-anchor", "middle")
      .text((node: SimNode) => node.display);

    this.simulation.nodes(nodes);
    this.simulation.force(
      "link",
      d3
        .forceLink<SimNode, SimLink>(links)
        .id((node) => node.id)
        .distance(60)
        .strength((link) => 0.2 + 0.8 * (link.weight / maxWeight))
    );
    this.applyEmphasis();
    this.simulation.alpha(0.6).restart();
  }

  private applyEmphasis(): void {
    const keep = this.emphasized();
    this.nodeLayer
      .selectAll("circle")
      .attr("opacity", (node: SimNode) => (keep && !keep.has(node.id) ? 0.15 : 1));
    this.linkLayer
      .selectAll("line")
      .attr(
        "stroke-opacity",
        (link: any) =>
          keep &&
          !(keep.has(link.source.id ?? link.source) && keep.has(link.target.id ?? link.target))
            ? 0.05
            : 0.5
      );
  }

  private showTooltip(event: MouseEvent, node: SimNode): void {
    this.tooltip.classList.remove("hidden");
    this.tooltip.innerHTML =
      `<strong>${node.display}</strong><br>` +
      `${node.tag} &middot; ${node.paper_count} paper${node.paper_count === 1 ? "" : "s"}`;
    this.tooltip.style.left = `${event.offsetX + 14}px`;
    this.tooltip.style.top = `${event.offsetY + 8}px`;
  }
}

export function tagLegend(): { tag: Tag; color: string }[] {
  return ALL_TAGS.map((tag) => ({ tag, color: TAG_COLORS[tag] }));
}
