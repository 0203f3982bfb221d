// Thin API client. At most one transition is considered "current" per
// session at any time: every request takes a sequence token, and a
// response whose token is no longer current is reported stale so the
// panels never show values from an overtaken request.

import type {
  ApiErrorEnvelope,
  DemoResponse,
  GraphPayload,
  PointInputs,
  SessionInfo,
  SlutskyResponse,
  TransitionResponse,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public kind: string,
    message: string,
    public position?: number,
  ) {
    super(message);
  }
}

export class SequenceGate {
  private seq = 0;

  begin(): number {
    this.seq += 1;
    return this.seq;
  }

  isCurrent(token: number): boolean {
    return token === this.seq;
  }
}

export interface Settled<T> {
  stale: boolean;
  body: T | null;
  error: ApiError | null;
}

export class ApiClient {
  readonly gate = new SequenceGate();

  constructor(
    private fetchFn: FetchLike,
    private base: string = "",
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await this.fetchFn(this.base + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    const payload = await resp.json();
    if (!resp.ok) {
      const env = payload as ApiErrorEnvelope;
      throw new ApiError(
        env.error?.kind ?? "internal_error",
        env.error?.message ?? "request failed",
        env.error?.position,
      );
    }
    return payload as T;
  }

  async createSession(utility: string): Promise<SessionInfo> {
    return this.post<SessionInfo>("/api/session", { utility });
  }

  async graph(): Promise<GraphPayload> {
    const resp = await this.fetchFn(this.base + "/api/graph");
    if (!resp.ok) {
      throw new ApiError("connection", `graph fetch failed (${resp.status})`);
    }
    return (await resp.json()) as GraphPayload;
  }

  /** Run a transition under the sequence gate; an overtaken response comes
   * back with stale=true and must be discarded by the caller. */
  async transition(
    sessionId: string,
    edge: string,
    point: PointInputs,
  ): Promise<Settled<TransitionResponse>> {
    const token = this.gate.begin();
    try {
      const body = await this.post<TransitionResponse>(
        `/api/session/${sessionId}/transition`,
        { edge, point },
      );
      return { stale: !this.gate.isCurrent(token), body, error: null };
    } catch (err) {
      const error =
        err instanceof ApiError ? err : new ApiError("connection", String(err));
      return { stale: !this.gate.isCurrent(token), body: null, error };
    }
  }

  async slutsky(
    sessionId: string,
    P: number[],
    M: number,
    i: number,
    j: number,
  ): Promise<SlutskyResponse> {
    return this.post<SlutskyResponse>(`/api/session/${sessionId}/slutsky`, {
      P,
      M,
      i,
      j,
    });
  }

  async demoNonconvex(sessionId: string): Promise<DemoResponse> {
    return this.post<DemoResponse>(`/api/session/${sessionId}/demo/nonconvex`, {});
  }
}
