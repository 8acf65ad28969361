/** Ordered, deduplicated store of timeline entries and its DOM renderer.
 *
 * Events may arrive twice (stream reconnects replay a tail) or out of
 * order; the store keeps exactly one entry per sequence number, sorted.
 * Rendering is a pure function of the store, so replaying the same event
 * log always yields the same DOM.
 */

import { AgentEvent, TimelineEntry, summarize } from "./events.js";

export class TimelineStore {
  private seen = new Set<number>();
  private ordered: TimelineEntry[] = [];

  /** Returns true when the event was new, false for a duplicate seq. */
  add(event: AgentEvent): boolean {
    if (this.seen.has(event.seq)) return false;
    this.seen.add(event.seq);
    const entry = summarize(event);
    const at = this.ordered.findIndex((e) => e.seq > entry.seq);
    if (at === -1) this.ordered.push(entry);
    else this.ordered.splice(at, 0, entry);
    return true;
  }

  get entries(): readonly TimelineEntry[] {
    return this.ordered;
  }

  get lastSeq(): number {
    return this.ordered.length
      ? this.ordered[this.ordered.length - 1].seq
      : 0;
  }

  /** Sequence numbers missing between 1 and the highest seen. */
  gaps(): number[] {
    const missing: number[] = [];
    let expect = 1;
    for (const entry of this.ordered) {
      for (; expect < entry.seq; expect++) missing.push(expect);
      expect = entry.seq + 1;
    }
    return missing;
  }
}

function entryElement(doc: Document, entry: TimelineEntry): HTMLElement {
  const item = doc.createElement("li");
  item.dataset.seq = String(entry.seq);
  item.dataset.kind = entry.kind;
  item.className = `entry agent-${entry.agent}`;

  const seq = doc.createElement("span");
  seq.className = "seq";
  seq.textContent = `#${entry.seq}`;

  const agent = doc.createElement("span");
  agent.className = "agent";
  agent.textContent = entry.agent;

  const kind = doc.createElement("span");
  kind.className = "kind";
  kind.textContent = entry.kind;

  const summary = doc.createElement("span");
  summary.className = "summary";
  summary.textContent = entry.summary;

  item.append(seq, agent, kind, summary);
  if (entry.preview) {
    const preview = doc.createElement("div");
    preview.className = "preview";
    preview.textContent = entry.preview;
    item.append(preview);
  }
  return item;
}

/** Rebuild the list to mirror the store: one item per entry, in seq order. */
export function renderTimeline(list: HTMLElement, store: TimelineStore): void {
  const doc = list.ownerDocument;
  list.replaceChildren(
    ...store.entries.map((entry) => entryElement(doc, entry)),
  );
}
