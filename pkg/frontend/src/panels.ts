// Result panels as HTML strings (same rationale as svg.ts: testable
// without a DOM). All numbers are echoed from service payloads.

import { formatResidual, formatValue } from "./format.js";
import type {
  ApiErrorEnvelope,
  InfoLossPayload,
  SlutskyResponse,
  TransitionResponse,
} from "./types.js";

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function renderTransitionResult(resp: TransitionResponse): string {
  const rows = resp.trace
    .map(
      (s) =>
        `<tr><td>${esc(s.transition)}</td><td>${esc(s.node)}</td>` +
        `<td class="value">${esc(formatValue(s.value))}</td>` +
        `<td class="step-error">${esc(s.error ?? "")}</td></tr>`,
    )
    .join("");
  const residual =
    resp.residual_vs_canonical !== null
      ? `<p class="residual">matches the canonical route, ` +
        `${esc(formatResidual(resp.residual_vs_canonical))}</p>`
      : "";
  return (
    `<h3>${esc(resp.edge)} &rarr; ${esc(resp.node)}` +
    (resp.variant === "normalized" ? " (normalized)" : "") +
    `</h3>` +
    `<p class="value" data-role="transition-value">${esc(formatValue(resp.value))}</p>` +
    residual +
    `<table class="trace"><thead><tr><th>transition</th><th>node</th>` +
    `<th>value</th><th></th></tr></thead><tbody>${rows}</tbody></table>` +
    `<p class="provenance">provenance: ${esc(resp.provenance.join(" &rarr; "))}</p>`
  );
}

export function renderError(env: ApiErrorEnvelope["error"]): string {
  const pos = env.position !== undefined ? ` (offset ${env.position})` : "";
  return `<div class="error-box"><strong>${esc(env.kind)}</strong>: ${esc(
    env.message,
  )}${pos}</div>`;
}

export function renderValidation(missing: string[]): string {
  return `<div class="error-box validation">fill in: ${esc(
    missing.join(", "),
  )} (no request sent)</div>`;
}

export function renderSlutsky(resp: SlutskyResponse): string {
  const bars: [string, number][] = [
    ["total", resp.total],
    ["substitution", resp.substitution],
    ["income", -resp.income_term],
  ];
  const maxAbs = Math.max(...bars.map(([, v]) => Math.abs(v)), 1e-12);
  const rows = bars
    .map(([name, v]) => {
      const width = (Math.abs(v) / maxAbs) * 100;
      const side = v < 0 ? "neg" : "pos";
      return (
        `<div class="bar-row"><span class="bar-name">${name}</span>` +
        `<span class="bar ${side}" style="width:${width.toFixed(1)}%"></span>` +
        `<span class="bar-value" data-role="${name}">${String(v)}</span></div>`
      );
    })
    .join("");
  return (
    `<h3>Slutsky decomposition</h3>${rows}` +
    `<p>total = substitution - income term: ${String(resp.total)} vs ` +
    `${String(resp.rhs)} (residual ${resp.residual.toExponential(2)}, ` +
    `${resp.pass ? "ok" : "FAIL"})</p>`
  );
}

export function renderInfoLoss(demo: InfoLossPayload, control: InfoLossPayload): string {
  const rows = demo.probes
    .map((probe, i) => {
      const ambiguous = demo.ambiguous_probes.some(
        (a) => JSON.stringify(a) === JSON.stringify(probe),
      );
      return (
        `<tr><td>(${probe.join(", ")})</td>` +
        `<td>${String(demo.original_u_values[i])}</td>` +
        `<td>${String(demo.recovered_u_values[i])}</td>` +
        `<td>${ambiguous ? "multi-valued inversion" : ""}</td></tr>`
      );
    })
    .join("");
  const flips = demo.ranking_flips
    .map(([a, b]) => `(${a.join(",")}) vs (${b.join(",")})`)
    .join("; ");
  return (
    `<h3>information loss under non-convex preferences</h3>` +
    `<table class="demo"><thead><tr><th>probe</th><th>original U</th>` +
    `<th>recovered U</th><th></th></tr></thead><tbody>${rows}</tbody></table>` +
    `<p>ranking flips: ${flips || "none"}</p>` +
    `<p data-role="verdict">convexified: <strong>${demo.convexified}</strong>` +
    ` (session control: ${control.convexified})</p>`
  );
}
