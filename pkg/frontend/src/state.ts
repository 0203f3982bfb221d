// View-model state and the form guard: a transition request is only sent
// when the point carries every argument of the target handle's signature.

import type { GraphEdge, GraphPayload, PointInputs } from "./types.js";

// normalized-variant transitions consume normalized prices, not (P, M)
const METHOD_ARGS: Record<string, string[]> = {
  t_norm_roy: ["p"],
  t_norm_shephard: ["p", "u"],
};

export function requiredArgs(graph: GraphPayload, method: string): string[] {
  const override = METHOD_ARGS[method];
  if (override) {
    return override;
  }
  const edge = graph.edges.find((e) => e.method === method);
  if (!edge) {
    return [];
  }
  const node = graph.nodes.find((n) => n.id === edge.to);
  return node ? node.args : [];
}

export function missingArgs(
  graph: GraphPayload,
  method: string,
  point: PointInputs,
): string[] {
  return requiredArgs(graph, method).filter((arg) => {
    const v = (point as Record<string, unknown>)[arg];
    if (v === undefined || v === null) {
      return true;
    }
    return Array.isArray(v) ? v.length === 0 : Number.isNaN(v as number);
  });
}

export function parseVector(text: string): number[] | undefined {
  const trimmed = text.trim();
  if (!trimmed) {
    return undefined;
  }
  const parts = trimmed.split(",").map((s) => Number(s.trim()));
  return parts.some((v) => Number.isNaN(v)) ? undefined : parts;
}

export function parseScalar(text: string): number | undefined {
  const trimmed = text.trim();
  if (!trimmed) {
    return undefined;
  }
  const v = Number(trimmed);
  return Number.isNaN(v) ? undefined : v;
}

export interface ViewState {
  sessionId: string | null;
  utility: string;
  graph: GraphPayload | null;
  skeletal: boolean;
  selectedEdge: string | null;
}

export function initialState(): ViewState {
  return {
    sessionId: null,
    utility: "q1^0.5*q2^0.5",
    graph: null,
    skeletal: false,
    selectedEdge: null,
  };
}

export function executableEdges(graph: GraphPayload): GraphEdge[] {
  return graph.edges.filter((e) => e.method !== null && e.method.startsWith("t_"));
}
