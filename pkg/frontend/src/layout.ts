// Fixed ring layout. The eight wheel functions sit on a circle with the
// primal half on the left and the dual half on the right; BC flanks the
// primal half and EAF the dual half. Positions are deliberately static
// (not force-directed) so the spatial correspondence with the classroom
// figure never shifts between sessions.

import type { GraphEdge, GraphNode } from "./types.js";

export interface Placed {
  id: string;
  x: number;
  y: number;
}

const RING_ANGLES: Record<string, number> = {
  // degrees, standard orientation (0 = east, counterclockwise)
  DUF: 125,
  HIDF: 160,
  MDF: 200,
  IUF: 235,
  DF: 55,
  AIDF: 20,
  HDF: 340,
  EF: 305,
};

const FLANKS: Record<string, [number, number]> = {
  BC: [-0.42, -1.28], // above the primal half (unit coords, y up)
  EAF: [0.42, -1.28], // above the dual half
};

export function placeNodes(
  nodes: GraphNode[],
  cx: number,
  cy: number,
  radius: number,
): Placed[] {
  return nodes.map((n) => {
    if (n.id in FLANKS) {
      const [fx, fy] = FLANKS[n.id];
      return { id: n.id, x: cx + fx * radius, y: cy + fy * radius };
    }
    const deg = RING_ANGLES[n.id];
    if (deg === undefined) {
      throw new Error(`no ring position for node ${n.id}`);
    }
    const rad = (deg * Math.PI) / 180;
    return { id: n.id, x: cx + radius * Math.cos(rad), y: cy - radius * Math.sin(rad) };
  });
}

export function isPrimalSide(id: string): boolean {
  return ["DUF", "HIDF", "MDF", "IUF", "BC"].includes(id);
}

/** Parallel edges between the same pair get perpendicular offsets so all
 * of them stay visible and hoverable. */
export function edgeOffsets(edges: GraphEdge[]): number[] {
  const groups = new Map<string, number[]>();
  edges.forEach((e, i) => {
    const key = [e.from, e.to].sort().join("~");
    const bucket = groups.get(key) ?? [];
    bucket.push(i);
    groups.set(key, bucket);
  });
  const offsets = new Array<number>(edges.length).fill(0);
  for (const bucket of groups.values()) {
    bucket.forEach((edgeIndex, k) => {
      offsets[edgeIndex] = (k - (bucket.length - 1) / 2) * 14;
    });
  }
  return offsets;
}
