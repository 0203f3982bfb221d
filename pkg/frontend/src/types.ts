// Payload shapes of the dualwheel HTTP API. The UI performs no numeric
// computation: every number shown on screen arrives in one of these.

export type EdgeKind = "dual" | "inverse" | "counterpart" | "derivative";

export interface GraphNode {
  id: string;
  signature: string;
  label: string;
  args: string[];
}

export interface GraphEdge {
  from: string;
  to: string;
  kind: EdgeKind;
  method: string | null;
  bidirectional: boolean;
  label: string;
  formula: string;
}

export interface GraphPayload {
  nodes: GraphNode[];
  edges: GraphEdge[];
  kinds: EdgeKind[];
}

export interface SessionInfo {
  session_id: string;
  n_goods: number;
  utility: string;
}

export interface TraceStep {
  transition: string;
  node: string;
  value: number | number[] | null;
  error?: string;
}

export interface TransitionResponse {
  edge: string;
  node: string;
  variant: string;
  value: number | number[] | null;
  provenance: string[];
  residual_vs_canonical: number | null;
  trace: TraceStep[];
}

export interface SlutskyResponse {
  identity: string;
  point: Record<string, unknown>;
  total: number;
  rhs: number;
  substitution: number;
  income_term: number;
  residual: number;
  pass: boolean;
  u: number;
}

export interface InfoLossPayload {
  probes: number[][];
  original_u_values: number[];
  recovered_u_values: (number | string)[];
  ranking_flips: number[][][];
  convexified: boolean;
  tolerance: number;
  ambiguous_probes: number[][];
}

export interface DemoResponse {
  demo: InfoLossPayload;
  session_control: InfoLossPayload;
}

export interface ApiErrorEnvelope {
  error: { kind: string; message: string; position?: number };
}

export interface PointInputs {
  P?: number[];
  M?: number;
  u?: number;
  q?: number[];
  p?: number[];
}
