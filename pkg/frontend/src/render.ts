/** SVG rendering of the graph view model plus the status banner. */

import { GraphViewModel, ViewNode } from "./viewmodel.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const CELL_X = 90;
const CELL_Y = 110;
const MARGIN = 60;

function toPixels(nodes: ViewNode[]): (n: { x: number; y: number }) => [number, number] {
  const ys = nodes.map((n) => n.y);
  const maxDepth = Math.min(0, ...ys);
  const height = (-maxDepth + 1) * CELL_Y + MARGIN;
  return (n) => [MARGIN + n.x * CELL_X, height + n.y * CELL_Y - MARGIN / 2];
}

export function renderGraph(svg: SVGSVGElement, view: GraphViewModel, blinkPhase: number): void {
  while (svg.firstChild) svg.removeChild(svg.firstChild);
  const pos = new Map(view.nodes.map((n) => [n.id, n]));
  const px = toPixels(view.nodes);

  const xs = view.nodes.map((n) => px(n)[0]);
  const ys = view.nodes.map((n) => px(n)[1]);
  svg.setAttribute(
    "viewBox",
    `0 0 ${Math.max(...xs, 200) + MARGIN} ${Math.max(...ys, 200) + MARGIN}`,
  );

  for (const edge of view.edges) {
    const a = pos.get(edge.from);
    const b = pos.get(edge.to);
    if (!a || !b) continue;
    const [x1, y1] = px(a);
    const [x2, y2] = px(b);
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("x1", String(x1));
    line.setAttribute("y1", String(y1));
    line.setAttribute("x2", String(x2));
    line.setAttribute("y2", String(y2));
    line.setAttribute("stroke", edge.live ? "#4a7dd4" : "#b9c4d8");
    line.setAttribute("stroke-width", edge.strokeWidth.toFixed(2));
    line.setAttribute("stroke-linecap", "round");
    svg.appendChild(line);
  }

  for (const node of view.nodes) {
    const [x, y] = px(node);
    const group = document.createElementNS(SVG_NS, "g");
    group.setAttribute("data-node", node.id);
    const circle = document.createElementNS(SVG_NS, "circle");
    circle.setAttribute("cx", String(x));
    circle.setAttribute("cy", String(y));
    circle.setAttribute("r", node.role === "leaf" ? "11" : "20");
    let fill = node.color;
    if (node.role === "leaf" && node.blinkHz > 0) {
      // LED indicator: blink rate monotone in windowed resource
      const on = Math.sin(2 * Math.PI * node.blinkHz * blinkPhase) > 0;
      fill = on ? node.color : "#2b2b33";
    }
    circle.setAttribute("fill", fill);
    circle.setAttribute("stroke", node.advised ? "#ffcf33" : "#222")
    circle.setAttribute("stroke-width", node.advised ? "4" : "1.5");
    group.appendChild(circle);

    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("x", String(x));
    label.setAttribute("y", String(y + (node.role === "leaf" ? 26 : 5)));
    label.setAttribute("text-anchor", "middle");
    label.setAttribute("class", node.role === "leaf" ? "leaf-label" : "module-label");
    label.textContent = node.role === "leaf" ? node.id.split("-").pop()! : node.id;
    group.appendChild(label);

    if (node.advised) {
      const badge = document.createElementNS(SVG_NS, "text");
      badge.setAttribute("x", String(x));
      badge.setAttribute("y", String(y - 18));
      badge.setAttribute("text-anchor", "middle");
      badge.setAttribute("class", "advice-badge");
      badge.textContent = "▲ grow here";
      group.appendChild(badge);
    }
    svg.appendChild(group);
  }
}

export function renderBanner(el: HTMLElement, stale: boolean, status: string): void {
  el.textContent = stale ? "stale data: no telemetry for 3s, reconnecting…" : status;
  el.className = stale ? "banner stale" : "banner ok";
}
