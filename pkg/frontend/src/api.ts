/** Typed client for the session service.  Everything the page shows comes
 * through this interface: snapshots, events (batch or stream URL),
 * artifacts, and the report.
 */

import { AgentEvent } from "./events.js";

export interface SessionSnapshot {
  id: string;
  state: string;
  last_outcome: string | null;
  reason: string | null;
  counters: Record<string, number>;
  error: string | null;
}

export interface EventBatch {
  events: AgentEvent[];
  last_seq: number;
  state: string;
}

export interface SessionConfig {
  personas?: string;
  transcript?: string[];
  seed?: number;
  timing?: string;
}

/** Structural subset of fetch/Response so tests can substitute fakes. */
export interface BodyReader {
  read(): Promise<{ done: boolean; value?: Uint8Array }>;
  cancel(): Promise<unknown> | void;
}

export interface HttpResponse {
  ok: boolean;
  status: number;
  statusText: string;
  json(): Promise<unknown>;
  text(): Promise<string>;
  body: { getReader(): BodyReader } | null;
}

export interface RequestOptions {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
  signal?: AbortSignal;
}

export type FetchLike = (
  url: string,
  options?: RequestOptions,
) => Promise<HttpResponse>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

const defaultFetch: FetchLike = (url, options) =>
  fetch(url, options) as Promise<HttpResponse>;

export class ApiClient {
  readonly baseUrl: string;
  private readonly fetchFn: FetchLike;

  constructor(baseUrl: string, fetchFn: FetchLike = defaultFetch) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchFn = fetchFn;
  }

  private async request(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<HttpResponse> {
    const options: RequestOptions = { method };
    if (body !== undefined) {
      options.headers = { "content-type": "application/json" };
      options.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(this.baseUrl + path, options);
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const parsed = (await response.json()) as { detail?: unknown };
        if (typeof parsed.detail === "string") detail = parsed.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return response;
  }

  private async json<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.request(method, path, body);
    return (await response.json()) as T;
  }

  createSession(config: SessionConfig = {}): Promise<SessionSnapshot> {
    return this.json("POST", "/sessions", config);
  }

  getSession(id: string): Promise<SessionSnapshot> {
    return this.json("GET", `/sessions/${id}`);
  }

  submitQuery(id: string, query: string): Promise<SessionSnapshot> {
    return this.json("POST", `/sessions/${id}/query`, { query });
  }

  submitFeedback(id: string, feedback: string): Promise<SessionSnapshot> {
    return this.json("POST", `/sessions/${id}/feedback`, { feedback });
  }

  getEvents(id: string, since = 0): Promise<EventBatch> {
    return this.json("GET", `/sessions/${id}/events?since=${since}`);
  }

  eventStreamUrl(id: string, since = 0): string {
    return `${this.baseUrl}/sessions/${id}/events?since=${since}`;
  }

  artifactUrl(id: string, name: string): string {
    return `${this.baseUrl}/sessions/${id}/artifacts/${name}`;
  }

  async getArtifactText(id: string, name: string): Promise<string> {
    const response = await this.request("GET", `/sessions/${id}/artifacts/${name}`);
    return response.text();
  }

  async getReport(id: string): Promise<string> {
    const response = await this.request("GET", `/sessions/${id}/report`);
    return response.text();
  }

  /** The stream endpoint needs the SSE accept header and an abort signal. */
  openStream(url: string, signal?: AbortSignal): Promise<HttpResponse> {
    return this.fetchFn(url, {
      headers: { accept: "text/event-stream" },
      signal,
    });
  }
}
