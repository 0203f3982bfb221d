// Wheel rendering as an SVG string. String output keeps this layer fully
// testable without a DOM; main.ts injects it and wires delegated events.

import { edgeOffsets, isPrimalSide, placeNodes } from "./layout.js";
import type { GraphEdge, GraphPayload } from "./types.js";

export const KIND_COLORS: Record<string, string> = {
  dual: "#c0392b",
  inverse: "#2e6fbb",
  counterpart: "#1e9e77",
  derivative: "#777777",
};

const W = 860;
const H = 640;
const CX = W / 2;
const CY = 330;
const R = 225;

function esc(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function edgeTitle(e: GraphEdge): string {
  return e.formula ? `${e.label}: ${e.formula}` : e.label || e.method || e.kind;
}

export function renderWheel(graph: GraphPayload, skeletal: boolean): string {
  const placed = placeNodes(graph.nodes, CX, CY, R);
  const pos = new Map(placed.map((p) => [p.id, p]));
  const offsets = edgeOffsets(graph.edges);

  const edgeMarkup = graph.edges
    .map((e, i) => {
      const a = pos.get(e.from);
      const b = pos.get(e.to);
      if (!a || !b) {
        return "";
      }
      const dx = b.x - a.x;
      const dy = b.y - a.y;
      const len = Math.hypot(dx, dy) || 1;
      const nx = (-dy / len) * offsets[i];
      const ny = (dx / len) * offsets[i];
      const mx = (a.x + b.x) / 2 + nx * 2.2;
      const my = (a.y + b.y) / 2 + ny * 2.2;
      const color = KIND_COLORS[e.kind] ?? "#999";
      const dash = e.bidirectional ? "" : ' marker-end="url(#arrow)"';
      const labelText = skeletal ? e.label : edgeTitle(e);
      const label = e.method
        ? `<text class="edge-label" x="${mx}" y="${my}" fill="${color}">${esc(
            skeletal ? e.label : labelText,
          )}</text>`
        : "";
      return (
        `<g class="edge" data-method="${esc(e.method ?? "")}" data-kind="${e.kind}">` +
        `<path d="M ${a.x + nx} ${a.y + ny} Q ${mx} ${my} ${b.x + nx} ${b.y + ny}"` +
        ` stroke="${color}" fill="none" stroke-width="1.6"${dash}>` +
        `<title>${esc(edgeTitle(e))}</title></path>${label}</g>`
      );
    })
    .join("");

  const nodeMarkup = placed
    .map((p) => {
      const node = graph.nodes.find((n) => n.id === p.id)!;
      const side = isPrimalSide(p.id) ? "primal" : "dual";
      return (
        `<g class="node node-${side}" data-node="${p.id}">` +
        `<circle cx="${p.x}" cy="${p.y}" r="26"/>` +
        `<text x="${p.x}" y="${p.y + 4}">${p.id}</text>` +
        `<title>${esc(node.label)} ${esc(node.signature)}</title></g>`
      );
    })
    .join("");

  const legend = graph.kinds
    .map(
      (k, i) =>
        `<g class="legend-item" transform="translate(16 ${18 + i * 20})">` +
        `<line x1="0" y1="0" x2="26" y2="0" stroke="${KIND_COLORS[k]}" stroke-width="3"/>` +
        `<text x="32" y="4">${k}</text></g>`,
    )
    .join("");

  return (
    `<svg viewBox="0 0 ${W} ${H}" xmlns="http://www.w3.org/2000/svg">` +
    `<defs><marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" ` +
    `markerWidth="7" markerHeight="7" orient="auto-start-reverse">` +
    `<path d="M 0 0 L 10 5 L 0 10 z" fill="#777"/></marker></defs>` +
    `<text class="half-label" x="${CX - R}" y="${H - 18}">primal problem</text>` +
    `<text class="half-label" x="${CX + R - 90}" y="${H - 18}">dual problem</text>` +
    `<g class="legend">${legend}</g>${edgeMarkup}${nodeMarkup}</svg>`
  );
}

export function countRendered(svg: string): { nodes: number; edges: number } {
  return {
    nodes: (svg.match(/class="node /g) ?? []).length,
    edges: (svg.match(/class="edge"/g) ?? []).length,
  };
}
