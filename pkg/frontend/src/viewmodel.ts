/**
 * Derives the render-ready graph view from registry + stream state:
 * module and leaf nodes with color/blink encodings, edges with vessel
 * stroke widths, the advice badge on the best free leaf, and a
 * bottom-rooted tree layout.
 */

import { Registry, StreamState } from "./model.js";

export type NodeRole = "root" | "internal" | "leaf";

export interface ViewNode {
  id: string;
  role: NodeRole;
  resource: number; // windowed for leaves, instantaneous for modules
  color: string;
  blinkHz: number; // leaves only, monotone in resource
  x: number;
  y: number;
  advised: boolean;
}

export interface ViewEdge {
  from: string; // module node
  to: string; // child module or leaf node
  vessel: number;
  strokeWidth: number;
  live: boolean;
}

export interface GraphViewModel {
  nodes: ViewNode[];
  edges: ViewEdge[];
  advice: Array<{ leaf: string; share: number }>;
  stale: boolean;
}

/** Continuous purple (max) .. dark red (min) resource scale. */
export function resourceColor(norm: number): string {
  const t = Math.max(0, Math.min(1, norm));
  const lerp = (a: number, b: number) => Math.round(a + (b - a) * t);
  return `rgb(${lerp(139, 128)}, ${lerp(0, 0)}, ${lerp(21, 208)})`;
}

/** Leaf indicator blink rate: strictly increasing in resource. */
export function blinkRate(resource: number): number {
  return 0.5 + 4.0 * Math.max(0, Math.min(1, resource));
}

export function vesselStroke(vessel: number, maxVessel: number): number {
  if (maxVessel <= 0) return 1;
  return 1 + 9 * Math.sqrt(Math.max(0, vessel) / maxVessel);
}

/** Free leaves ranked by windowed resource share, ties lexicographic. */
export function adviceRanking(
  registry: Registry,
  state: StreamState,
): Array<{ leaf: string; share: number }> {
  const occupied = new Set(registry.edges.map((e) => `${e.parent}-${e.slot}`));
  const leaves: Array<{ leaf: string; mean: number }> = [];
  for (const module of registry.modules.keys()) {
    if (!state.latest.has(module)) continue; // not running: nothing to rank
    for (const slot of [1, 2]) {
      const leaf = `${module}-${slot}`;
      if (!occupied.has(leaf)) {
        leaves.push({ leaf, mean: state.meanSlotR(module, slot) });
      }
    }
  }
  const total = leaves.reduce((acc, l) => acc + l.mean, 0);
  return leaves
    .map((l) => ({ leaf: l.leaf, share: total > 0 ? l.mean / total : 1 / leaves.length }))
    .sort((a, b) => (b.share - a.share) || (a.leaf < b.leaf ? -1 : 1));
}

interface LayoutPoint {
  x: number;
  y: number;
}

/** Plant-like layout: roots at the bottom, children stacked upward. */
export function layout(registry: Registry, state: StreamState): Map<string, LayoutPoint> {
  const points = new Map<string, LayoutPoint>();
  const childOf = new Map<string, Map<number, string>>();
  const hasParent = new Set<string>();
  for (const e of registry.edges) {
    if (!childOf.has(e.parent)) childOf.set(e.parent, new Map());
    childOf.get(e.parent)!.set(e.slot, e.child);
    hasParent.add(e.child);
  }
  const running = [...registry.modules.keys()].filter((m) => state.latest.has(m)).sort();
  const roots = running.filter((m) => !hasParent.has(m));
  let cursor = 0;

  const place = (module: string, depth: number): number => {
    const xs: number[] = [];
    for (const slot of [1, 2]) {
      const child = childOf.get(module)?.get(slot);
      const leafId = `${module}-${slot}`;
      if (child && state.latest.has(child)) {
        xs.push(place(child, depth + 1));
      } else {
        points.set(leafId, { x: cursor, y: -(depth + 1) });
        xs.push(cursor);
        cursor += 1;
      }
    }
    const x = xs.reduce((a, b) => a + b, 0) / xs.length;
    points.set(module, { x, y: -depth });
    return x;
  };

  for (const root of roots) {
    place(root, 0);
    cursor += 1; // gap between separate structures
  }
  return points;
}

export function buildViewModel(
  registry: Registry,
  state: StreamState,
  stale: boolean,
): GraphViewModel {
  const advice = adviceRanking(registry, state);
  const advised = advice.length > 0 ? advice[0].leaf : null;
  const points = layout(registry, state);
  const childOf = new Map(registry.edges.map((e) => [`${e.parent}-${e.slot}`, e.child]));

  const nodes: ViewNode[] = [];
  const edges: ViewEdge[] = [];
  const running = [...registry.modules.keys()].filter((m) => state.latest.has(m)).sort();

  let maxVessel = 0;
  let maxResource = 0;
  for (const module of running) {
    const frame = state.latest.get(module)!;
    maxResource = Math.max(maxResource, frame.rIn + frame.rGen);
    for (const slot of [0, 1]) maxVessel = Math.max(maxVessel, frame.slots[slot].v);
  }

  for (const module of running) {
    const frame = state.latest.get(module)!;
    const resource = frame.rIn + frame.rGen;
    const point = points.get(module) ?? { x: 0, y: 0 };
    nodes.push({
      id: module,
      role: frame.rGen > 0 ? "root" : "internal",
      resource,
      color: resourceColor(maxResource > 0 ? resource / maxResource : 0),
      blinkHz: 0,
      x: point.x,
      y: point.y,
      advised: false,
    });
    for (const slot of [1, 2]) {
      const leafId = `${module}-${slot}`;
      const sample = frame.slots[slot - 1];
      const child = childOf.get(leafId);
      const target = child && state.latest.has(child) ? child : leafId;
      if (target === leafId) {
        const windowed = state.meanSlotR(module, slot);
        const point = points.get(leafId) ?? { x: 0, y: 0 };
        nodes.push({
          id: leafId,
          role: "leaf",
          resource: windowed,
          color: resourceColor(maxResource > 0 ? windowed / maxResource : 0),
          blinkHz: blinkRate(windowed),
          x: point.x,
          y: point.y,
          advised: leafId === advised,
        });
      }
      edges.push({
        from: module,
        to: target,
        vessel: sample.v,
        strokeWidth: vesselStroke(sample.v, maxVessel),
        live: sample.live,
      });
    }
  }
  return { nodes, edges, advice, stale };
}
