/** Live event delivery: an SSE reader with automatic resume, plus a
 * polling fallback.  Both paths resume from the last delivered sequence
 * number, and the stream never hands the same seq to the page twice, so a
 * dropped connection costs nothing but latency.
 */

import { ApiClient, ApiError } from "./api.js";
import { AgentEvent } from "./events.js";

/** Incremental parser for `id:`/`data:` framed server-sent events. */
export class SseParser {
  private buffer = "";

  feed(chunk: string): AgentEvent[] {
    this.buffer += chunk;
    const events: AgentEvent[] = [];
    let end;
    while ((end = this.buffer.indexOf("\n\n")) !== -1) {
      const frame = this.buffer.slice(0, end);
      this.buffer = this.buffer.slice(end + 2);
      const data = frame
        .split("\n")
        .filter((line) => line.startsWith("data: "))
        .map((line) => line.slice(6))
        .join("\n");
      if (data) events.push(JSON.parse(data) as AgentEvent);
    }
    return events;
  }
}

export type StreamPhase = "streaming" | "polling" | "idle";

export interface StreamHandlers {
  onEvent: (event: AgentEvent) => void;
  onState?: (state: string) => void;
  onPhase?: (phase: StreamPhase) => void;
}

export interface StreamOptions {
  mode?: "sse" | "poll";
  retryDelayMs?: number;
  pollIntervalMs?: number;
}

const TERMINAL_STATES = new Set(["awaiting_feedback", "aborted"]);

export class EventStream {
  private lastSeq = 0;
  private stopped = false;
  private controller: AbortController | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private wake: (() => void) | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly sessionId: string,
    private readonly handlers: StreamHandlers,
    private readonly options: StreamOptions = {},
  ) {}

  /** Deliver every event after `fromSeq` until the session settles.
   * Resolves on a terminal state or an explicit stop(); rejects only on
   * permanent errors (unknown session, wrong state).
   */
  async start(fromSeq = 0): Promise<void> {
    this.lastSeq = fromSeq;
    this.stopped = false;
    const mode = this.options.mode ?? "sse";

    while (!this.stopped) {
      try {
        if (mode === "sse") await this.readStream();
      } catch (error) {
        if (error instanceof ApiError && !this.stopped) throw error;
      }
      if (this.stopped) break;

      // After a stream closes (or in poll mode): fetch anything missed and
      // learn the session state; keep going only while the run is live.
      let state: string | null = null;
      try {
        this.handlers.onPhase?.("polling");
        const batch = await this.api.getEvents(this.sessionId, this.lastSeq);
        this.deliver(batch.events);
        state = batch.state;
        this.handlers.onState?.(state);
      } catch (error) {
        if (error instanceof ApiError) throw error;
        // network hiccup: retry below
      }
      if (this.stopped || (state !== null && TERMINAL_STATES.has(state))) break;
      await this.sleep(
        mode === "poll"
          ? (this.options.pollIntervalMs ?? 500)
          : (this.options.retryDelayMs ?? 1000),
      );
    }
    this.handlers.onPhase?.("idle");
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
    if (this.timer !== null) clearTimeout(this.timer);
    this.wake?.();
  }

  get deliveredUpTo(): number {
    return this.lastSeq;
  }

  private deliver(events: AgentEvent[]): void {
    for (const event of events) {
      if (event.seq <= this.lastSeq) continue; // replayed on resume
      this.lastSeq = event.seq;
      this.handlers.onEvent(event);
    }
  }

  private async readStream(): Promise<void> {
    this.controller = new AbortController();
    const url = this.api.eventStreamUrl(this.sessionId, this.lastSeq);
    const response = await this.api.openStream(url, this.controller.signal);
    if (!response.ok) throw new ApiError(response.status, response.statusText);
    if (!response.body) throw new Error("response has no body stream");

    this.handlers.onPhase?.("streaming");
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      if (value) this.deliver(parser.feed(decoder.decode(value, { stream: true })));
    }
  }

  private sleep(ms: number): Promise<void> {
    return new Promise((resolve) => {
      this.wake = resolve;
      this.timer = setTimeout(resolve, ms);
    });
  }
}
