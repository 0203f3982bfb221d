// DOM glue: session lifecycle, wheel rendering, edge selection, the
// transition/slutsky/demo panels. All logic worth testing lives in the
// imported modules; this file only wires events.

import { ApiClient } from "./api.js";
import { renderWheel } from "./svg.js";
import {
  renderError,
  renderInfoLoss,
  renderSlutsky,
  renderTransitionResult,
  renderValidation,
} from "./panels.js";
import {
  executableEdges,
  initialState,
  missingArgs,
  parseScalar,
  parseVector,
  requiredArgs,
} from "./state.js";
import type { PointInputs } from "./types.js";

const api = new ApiClient((url, init) => fetch(url, init));
const state = initialState();

const $ = (id: string) => document.getElementById(id)!;

function banner(message: string | null): void {
  const el = $("banner");
  el.textContent = message ?? "";
  el.classList.toggle("hidden", message === null);
}

function readPoint(): PointInputs {
  const point: PointInputs = {};
  const P = parseVector(($("in-P") as HTMLInputElement).value);
  const p = parseVector(($("in-p") as HTMLInputElement).value);
  const q = parseVector(($("in-q") as HTMLInputElement).value);
  const M = parseScalar(($("in-M") as HTMLInputElement).value);
  const u = parseScalar(($("in-u") as HTMLInputElement).value);
  if (P) point.P = P;
  if (p) point.p = p;
  if (q) point.q = q;
  if (M !== undefined) point.M = M;
  if (u !== undefined) point.u = u;
  return point;
}

function drawWheel(): void {
  if (!state.graph) {
    return;
  }
  $("wheel").innerHTML = renderWheel(state.graph, state.skeletal);
  document.querySelectorAll("#wheel .edge").forEach((el) => {
    el.addEventListener("click", () => {
      const method = (el as SVGGElement).dataset.method;
      if (method) {
        selectEdge(method);
      }
    });
  });
}

function selectEdge(method: string): void {
  state.selectedEdge = method;
  $("selected-edge").textContent = method;
  if (state.graph) {
    $("edge-needs").textContent =
      "needs: " + requiredArgs(state.graph, method).join(", ");
  }
  document.querySelectorAll("#wheel .edge").forEach((el) => {
    el.classList.toggle(
      "selected",
      (el as SVGGElement).dataset.method === method,
    );
  });
}

async function newSession(): Promise<void> {
  const utility = ($("in-utility") as HTMLInputElement).value;
  try {
    const info = await api.createSession(utility);
    state.sessionId = info.session_id;
    state.utility = info.utility;
    $("session-label").textContent = `${info.utility} (${info.n_goods} goods)`;
    banner(null);
  } catch (err) {
    $("result").innerHTML = renderError({
      kind: "parse_error",
      message: String(err instanceof Error ? err.message : err),
    });
  }
}

async function runTransition(): Promise<void> {
  if (!state.graph || !state.sessionId || !state.selectedEdge) {
    return;
  }
  const point = readPoint();
  const missing = missingArgs(state.graph, state.selectedEdge, point);
  if (missing.length > 0) {
    $("result").innerHTML = renderValidation(missing);
    return; // form guard: nothing is sent
  }
  const settled = await api.transition(state.sessionId, state.selectedEdge, point);
  if (settled.stale) {
    return; // overtaken by a newer request
  }
  if (settled.error) {
    $("result").innerHTML = renderError({
      kind: settled.error.kind,
      message: settled.error.message,
      position: settled.error.position,
    });
    return;
  }
  $("result").innerHTML = renderTransitionResult(settled.body!);
}

async function runSlutsky(): Promise<void> {
  if (!state.sessionId) {
    return;
  }
  const P = parseVector(($("in-P") as HTMLInputElement).value);
  const M = parseScalar(($("in-M") as HTMLInputElement).value);
  const i = parseScalar(($("in-i") as HTMLInputElement).value) ?? 1;
  const j = parseScalar(($("in-j") as HTMLInputElement).value) ?? 1;
  if (!P || M === undefined) {
    $("slutsky-panel").innerHTML = renderValidation(["P", "M"]);
    return;
  }
  try {
    const resp = await api.slutsky(state.sessionId, P, M, i, j);
    $("slutsky-panel").innerHTML = renderSlutsky(resp);
  } catch (err) {
    $("slutsky-panel").innerHTML = renderError({
      kind: "request",
      message: String(err instanceof Error ? err.message : err),
    });
  }
}

async function runDemo(): Promise<void> {
  if (!state.sessionId) {
    return;
  }
  try {
    const resp = await api.demoNonconvex(state.sessionId);
    $("demo-panel").innerHTML = renderInfoLoss(resp.demo, resp.session_control);
  } catch (err) {
    $("demo-panel").innerHTML = renderError({
      kind: "request",
      message: String(err instanceof Error ? err.message : err),
    });
  }
}

async function boot(): Promise<void> {
  try {
    state.graph = await api.graph();
    banner(null);
  } catch {
    banner("cannot reach the duality service; start it with: duality serve");
    return;
  }
  drawWheel();
  const select = $("edge-select") as HTMLSelectElement;
  executableEdges(state.graph).forEach((e) => {
    const opt = document.createElement("option");
    opt.value = e.method!;
    opt.textContent = `${e.method} (${e.from} → ${e.to})`;
    select.appendChild(opt);
  });
  select.addEventListener("change", () => selectEdge(select.value));
  $("btn-session").addEventListener("click", () => void newSession());
  $("btn-run").addEventListener("click", () => void runTransition());
  $("btn-slutsky").addEventListener("click", () => void runSlutsky());
  $("btn-demo").addEventListener("click", () => void runDemo());
  $("toggle-skeletal").addEventListener("change", (ev) => {
    state.skeletal = (ev.target as HTMLInputElement).checked;
    drawWheel();
  });
  await newSession();
  selectEdge("t_primal_solve");
}

void boot();
