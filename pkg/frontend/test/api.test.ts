import { describe, expect, it } from "vitest";
import transitionRoy from "./fixtures/transition_roy.json";
import { ApiClient, SequenceGate } from "../src/api.js";
import type { FetchLike } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

describe("sequence gate", () => {
  it("marks overtaken tokens stale", () => {
    const gate = new SequenceGate();
    const first = gate.begin();
    const second = gate.begin();
    expect(gate.isCurrent(first)).toBe(false);
    expect(gate.isCurrent(second)).toBe(true);
  });
});

describe("api client", () => {
  it("discards a slow response overtaken by a newer transition", async () => {
    let release: (() => void) | null = null;
    const slow = new Promise<void>((resolve) => {
      release = resolve;
    });
    let call = 0;
    const fetchFn: FetchLike = async () => {
      call += 1;
      if (call === 1) {
        await slow; // first request hangs until the second resolves
      }
      return jsonResponse(transitionRoy);
    };
    const client = new ApiClient(fetchFn);
    const firstPromise = client.transition("sid", "t_roy", { P: [1, 1], M: 2 });
    const second = await client.transition("sid", "t_roy", { P: [1, 1], M: 2 });
    release!();
    const first = await firstPromise;
    expect(first.stale).toBe(true);
    expect(second.stale).toBe(false);
    expect(second.body?.value).toEqual(transitionRoy.value);
  });

  it("maps the error envelope onto ApiError", async () => {
    const fetchFn: FetchLike = async () =>
      jsonResponse(
        { error: { kind: "parse_error", message: "nope", position: 3 } },
        400,
      );
    const client = new ApiClient(fetchFn);
    const settled = await client.transition("sid", "t_roy", {});
    expect(settled.error?.kind).toBe("parse_error");
    expect(settled.error?.position).toBe(3);
    expect(settled.body).toBeNull();
  });

  it("performs no numeric computation on payloads", async () => {
    // the body must come back exactly as served
    const fetchFn: FetchLike = async () => jsonResponse(transitionRoy);
    const client = new ApiClient(fetchFn);
    const settled = await client.transition("sid", "t_roy", { P: [1, 1], M: 2 });
    expect(settled.body).toEqual(transitionRoy);
  });
});
