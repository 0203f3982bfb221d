// Display formatting. Values pass through from the service untouched
// except for list bracketing; no arithmetic happens here.

export function formatValue(v: number | number[] | string | null | undefined): string {
  if (v === null || v === undefined) {
    return "(not evaluated)";
  }
  if (Array.isArray(v)) {
    return `[${v.map((x) => String(x)).join(", ")}]`;
  }
  return String(v);
}

export function formatResidual(r: number | null): string {
  if (r === null) {
    return "";
  }
  return `residual vs canonical route: ${r.toExponential(2)}`;
}

export function formatPoint(point: Record<string, unknown>): string {
  return Object.entries(point)
    .map(([k, v]) => `${k}=${Array.isArray(v) ? `[${v.join(",")}]` : String(v)}`)
    .join("; ");
}
