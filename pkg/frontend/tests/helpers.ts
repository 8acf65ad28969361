/** Test scaffolding: the recorded session fixture and an in-memory fake
 * of the service wire protocol (snapshots, event batches, SSE frames,
 * artifacts, report).
 */

import { readFileSync } from "node:fs";
import { join } from "node:path";
import { AgentEvent } from "../src/events.js";
import { BodyReader, HttpResponse, RequestOptions } from "../src/api.js";

// Resolved from the package root so it works in both test environments.
const FIXTURES = join(process.cwd(), "tests", "fixtures");

export function fixtureText(name: string): string {
  return readFileSync(join(FIXTURES, name), "utf-8");
}

/** The events of a real cantilever session: seqs 1-6 are the first
 * accepted design, 7-17 the "add a hole" feedback cycle (including one
 * rejected verdict and a refinement round).
 */
export function fixtureEvents(): AgentEvent[] {
  return fixtureText("events.ndjson")
    .trim()
    .split("\n")
    .map((line) => JSON.parse(line) as AgentEvent);
}

function body(status: number, payload: string): HttpResponse {
  return {
    ok: status < 400,
    status,
    statusText: String(status),
    json: () => Promise.resolve(JSON.parse(payload) as unknown),
    text: () => Promise.resolve(payload),
    body: null,
  };
}

export function jsonResponse(status: number, value: unknown): HttpResponse {
  return body(status, JSON.stringify(value));
}

export function textResponse(status: number, text: string): HttpResponse {
  return body(status, text);
}

function encodeFrames(events: AgentEvent[]): Uint8Array[] {
  const encoder = new TextEncoder();
  return events.map((event) =>
    encoder.encode(`id: ${event.seq}\ndata: ${JSON.stringify(event)}\n\n`),
  );
}

/** A body reader that yields one SSE frame per read, optionally failing
 * mid-stream to simulate a dropped connection.
 */
function frameReader(frames: Uint8Array[], breakAfter: number | null): BodyReader {
  let at = 0;
  return {
    read() {
      if (breakAfter !== null && at >= breakAfter) {
        return Promise.reject(new Error("connection reset"));
      }
      if (at >= frames.length) return Promise.resolve({ done: true });
      return Promise.resolve({ done: false, value: frames[at++] });
    },
    cancel() {},
  };
}

export interface FakeServiceOptions {
  sessionId?: string;
  /** Called with the `since` value each time an SSE stream is opened. */
  onStreamOpen?: (since: number, opens: number) => void;
  /** Frames delivered before the Nth stream errors out (null = all). */
  breakFirstStreamAfter?: number;
  /** Serve the full log regardless of `since` (clients must dedupe). */
  replayFromStart?: boolean;
  /** Refuse SSE (no body) so clients fall back to polling. */
  withoutStreaming?: boolean;
}

/** Minimal stand-in for the session service, driven by a mutable event
 * list and state.  Tests mutate `events`/`state` between connections to
 * script live behavior.
 */
export class FakeService {
  events: AgentEvent[] = [];
  state = "running";
  report = "";
  artifacts = new Map<string, string>();
  readonly calls: Array<{ method: string; path: string; body?: unknown }> = [];
  streamOpens: number[] = [];
  private readonly id: string;

  constructor(private readonly options: FakeServiceOptions = {}) {
    this.id = options.sessionId ?? "s0001";
  }

  snapshot(): Record<string, unknown> {
    return {
      id: this.id,
      state: this.state,
      last_outcome: null,
      reason: null,
      counters: {},
      error: null,
    };
  }

  readonly fetch = (
    url: string,
    options: RequestOptions = {},
  ): Promise<HttpResponse> => {
    const parsed = new URL(url);
    const method = options.method ?? "GET";
    const path = parsed.pathname;
    this.calls.push({
      method,
      path,
      body: options.body ? JSON.parse(options.body) : undefined,
    });

    if (path === "/sessions" && method === "POST") {
      return Promise.resolve(jsonResponse(201, this.snapshot()));
    }
    if (path === `/sessions/${this.id}` && method === "GET") {
      return Promise.resolve(jsonResponse(200, this.snapshot()));
    }
    if (path === `/sessions/${this.id}/query` && method === "POST") {
      this.state = "running";
      return Promise.resolve(jsonResponse(202, this.snapshot()));
    }
    if (path === `/sessions/${this.id}/feedback` && method === "POST") {
      this.state = "running";
      return Promise.resolve(jsonResponse(202, this.snapshot()));
    }
    if (path === `/sessions/${this.id}/events`) {
      const since = Number(parsed.searchParams.get("since") ?? "0");
      if (options.headers?.["accept"] === "text/event-stream") {
        return Promise.resolve(this.stream(since));
      }
      const batch = this.events.filter((e) => e.seq > since);
      return Promise.resolve(
        jsonResponse(200, {
          events: batch,
          last_seq: batch.length ? batch[batch.length - 1].seq : since,
          state: this.state,
        }),
      );
    }
    const artifact = path.match(`^/sessions/${this.id}/artifacts/(.+)$`);
    if (artifact) {
      const content = this.artifacts.get(artifact[1]);
      return Promise.resolve(
        content !== undefined
          ? textResponse(200, content)
          : jsonResponse(404, { detail: `no artifact '${artifact[1]}'` }),
      );
    }
    if (path === `/sessions/${this.id}/report`) {
      return Promise.resolve(textResponse(200, this.report));
    }
    return Promise.resolve(jsonResponse(404, { detail: `unknown session` }));
  };

  private stream(since: number): HttpResponse {
    const opens = this.streamOpens.length;
    this.streamOpens.push(since);
    this.options.onStreamOpen?.(since, opens);
    if (this.options.withoutStreaming) {
      return { ...jsonResponse(200, {}), body: null };
    }
    const visible = this.options.replayFromStart
      ? this.events
      : this.events.filter((e) => e.seq > since);
    const breakAfter =
      opens === 0 ? (this.options.breakFirstStreamAfter ?? null) : null;
    return {
      ok: true,
      status: 200,
      statusText: "200",
      json: () => Promise.reject(new Error("stream body")),
      text: () => Promise.reject(new Error("stream body")),
      body: { getReader: () => frameReader(encodeFrames(visible), breakAfter) },
    };
  }
}
