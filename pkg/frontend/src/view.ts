/** One session on screen: the live timeline, the design and convergence
 * panels fed by run artifacts, the metrics from each verdict, the report
 * once the design is accepted, and the feedback path that sends the
 * session back into a live run.
 */

import { ApiClient } from "./api.js";
import { drawConvergence, parseHistory } from "./chart.js";
import { AgentEvent, fmt } from "./events.js";
import { renderDensity } from "./heatmap.js";
import { renderMarkdown } from "./report.js";
import { EventStream, StreamOptions } from "./stream.js";
import { TimelineStore, renderTimeline } from "./timeline.js";

export interface ViewElements {
  status: HTMLElement;
  timeline: HTMLElement;
  density: HTMLCanvasElement;
  convergence: HTMLCanvasElement;
  metrics: HTMLElement;
  reportSection: HTMLElement;
  reportBody: HTMLElement;
}

export class SessionView {
  readonly store = new TimelineStore();
  sessionId: string | null = null;
  private stream: EventStream | null = null;
  private running: Promise<void> = Promise.resolve();
  private tasks: Promise<unknown>[] = [];

  constructor(
    private readonly api: ApiClient,
    private readonly el: ViewElements,
    private readonly streamOptions: StreamOptions = {},
  ) {}

  /** Attach to a session and follow its events from the beginning. */
  async connect(sessionId: string): Promise<void> {
    this.disconnect();
    this.sessionId = sessionId;
    const snapshot = await this.api.getSession(sessionId);
    this.setStatus(snapshot.state);
    this.startStream(0);
  }

  disconnect(): void {
    this.stream?.stop();
    this.stream = null;
  }

  /** Ask for a revision; the view drops back to the live run. */
  async submitFeedback(text: string): Promise<void> {
    if (!this.sessionId) throw new Error("no session connected");
    this.disconnect();
    const snapshot = await this.api.submitFeedback(this.sessionId, text);
    this.el.reportSection.hidden = true;
    this.setStatus(snapshot.state);
    this.startStream(this.store.lastSeq);
  }

  /** Resolves when the stream has settled and side effects have landed. */
  async settled(): Promise<void> {
    await this.running;
    while (this.tasks.length) {
      const pending = this.tasks;
      this.tasks = [];
      await Promise.all(pending);
    }
  }

  private startStream(fromSeq: number): void {
    if (!this.sessionId) return;
    const stream = new EventStream(
      this.api,
      this.sessionId,
      {
        onEvent: (event) => this.handleEvent(event),
        onState: (state) => this.setStatus(state),
      },
      this.streamOptions,
    );
    this.stream = stream;
    this.running = stream.start(fromSeq).catch((error) => {
      this.el.status.textContent = `connection error: ${String(error)}`;
    });
  }

  private setStatus(state: string): void {
    this.el.status.textContent = this.sessionId
      ? `${this.sessionId} · ${state}`
      : state;
    this.el.status.dataset.state = state;
  }

  private track(task: Promise<unknown>): void {
    this.tasks.push(
      task.catch(() => {
        // artifact fetches are cosmetic; the timeline is the record
      }),
    );
  }

  private handleEvent(event: AgentEvent): void {
    if (!this.store.add(event)) return;
    renderTimeline(this.el.timeline, this.store);
    this.el.timeline.scrollTop = this.el.timeline.scrollHeight;

    const p = event.payload;
    switch (event.kind) {
      case "run_finished": {
        if (typeof p["density_image"] === "string" && this.sessionId) {
          this.track(
            renderDensity(this.el.density, {
              kind: "image",
              url: this.api.artifactUrl(this.sessionId, p["density_image"]),
            }),
          );
        }
        if (typeof p["history"] === "string" && this.sessionId) {
          this.track(
            this.api
              .getArtifactText(this.sessionId, p["history"])
              .then((csv) =>
                drawConvergence(this.el.convergence, parseHistory(csv)),
              ),
          );
        }
        break;
      }
      case "verdict":
        this.renderMetrics(p["metrics"]);
        break;
      case "accepted":
        if (this.sessionId) this.track(this.showReport(this.sessionId));
        break;
      case "aborted":
        this.setStatus("aborted");
        break;
    }
  }

  private renderMetrics(metrics: unknown): void {
    if (typeof metrics !== "object" || metrics === null) return;
    const doc = this.el.metrics.ownerDocument;
    const dl = doc.createElement("dl");
    for (const [key, value] of Object.entries(metrics)) {
      const dt = doc.createElement("dt");
      dt.textContent = key;
      const dd = doc.createElement("dd");
      dd.textContent = typeof value === "number" ? fmt(value) : String(value);
      dl.append(dt, dd);
    }
    this.el.metrics.replaceChildren(dl);
  }

  private async showReport(sessionId: string): Promise<void> {
    const markdown = await this.api.getReport(sessionId);
    this.el.reportBody.innerHTML = renderMarkdown(markdown, (path) =>
      this.api.artifactUrl(sessionId, path),
    );
    this.el.reportSection.hidden = false;
  }
}
