// @vitest-environment happy-dom
import { describe, expect, it } from "vitest";
import { TimelineStore, renderTimeline } from "../src/timeline.js";
import { fixtureEvents } from "./helpers.js";

describe("TimelineStore", () => {
  it("keeps one entry per event in seq order", () => {
    const store = new TimelineStore();
    for (const event of fixtureEvents()) expect(store.add(event)).toBe(true);
    expect(store.entries.map((e) => e.seq)).toEqual(
      Array.from({ length: 17 }, (_, i) => i + 1),
    );
    expect(store.lastSeq).toBe(17);
    expect(store.gaps()).toEqual([]);
  });

  it("rejects duplicate seqs so replays change nothing", () => {
    const store = new TimelineStore();
    const events = fixtureEvents();
    for (const event of events) store.add(event);
    for (const event of events) expect(store.add(event)).toBe(false);
    expect(store.entries).toHaveLength(events.length);
  });

  it("sorts entries that arrive out of order", () => {
    const store = new TimelineStore();
    const [a, b, c] = fixtureEvents();
    store.add(c);
    store.add(a);
    store.add(b);
    expect(store.entries.map((e) => e.seq)).toEqual([1, 2, 3]);
  });

  it("reports missing seqs as gaps", () => {
    const store = new TimelineStore();
    const events = fixtureEvents();
    store.add(events[0]);
    store.add(events[3]);
    expect(store.gaps()).toEqual([2, 3]);
  });
});

describe("renderTimeline", () => {
  it("renders one list item per entry with seq, agent, kind and summary", () => {
    const store = new TimelineStore();
    for (const event of fixtureEvents()) store.add(event);
    const list = document.createElement("ol");
    renderTimeline(list, store);

    expect(list.children).toHaveLength(17);
    const first = list.children[0] as HTMLElement;
    expect(first.dataset.seq).toBe("1");
    expect(first.dataset.kind).toBe("formulated");
    expect(first.querySelector(".agent")?.textContent).toBe("scientist");
    expect(first.querySelector(".summary")?.textContent).toContain(
      "minimize compliance",
    );
    const last = list.children[16] as HTMLElement;
    expect(last.dataset.kind).toBe("accepted");
  });

  it("is idempotent: re-rendering the same store yields identical DOM", () => {
    const store = new TimelineStore();
    for (const event of fixtureEvents()) store.add(event);
    const list = document.createElement("ol");
    renderTimeline(list, store);
    const before = list.innerHTML;
    renderTimeline(list, store);
    expect(list.innerHTML).toBe(before);
    expect(list.children).toHaveLength(17);
  });
});
