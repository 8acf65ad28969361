/** Page bootstrap: resolve the API base, wire the forms, own one view. */

import { ApiClient } from "./api.js";
import { SessionView, ViewElements } from "./view.js";

function apiBase(): string {
  const override = new URLSearchParams(window.location.search).get("api");
  return override ?? `${window.location.protocol}//${window.location.host}`;
}

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

function wire(): void {
  const api = new ApiClient(apiBase());
  const elements: ViewElements = {
    status: byId("status"),
    timeline: byId("timeline"),
    density: byId<HTMLCanvasElement>("density"),
    convergence: byId<HTMLCanvasElement>("convergence"),
    metrics: byId("metrics"),
    reportSection: byId("report-section"),
    reportBody: byId("report-body"),
  };
  const view = new SessionView(api, elements);

  const showError = (error: unknown) => {
    elements.status.textContent = String(error);
  };

  byId<HTMLFormElement>("start-form").addEventListener("submit", (e) => {
    e.preventDefault();
    const query = byId<HTMLTextAreaElement>("query").value.trim();
    if (!query) return;
    api
      .createSession({})
      .then((session) => api.submitQuery(session.id, query))
      .then((session) => view.connect(session.id))
      .catch(showError);
  });

  byId<HTMLFormElement>("connect-form").addEventListener("submit", (e) => {
    e.preventDefault();
    const sessionId = byId<HTMLInputElement>("session-id").value.trim();
    if (sessionId) view.connect(sessionId).catch(showError);
  });

  byId<HTMLFormElement>("feedback-form").addEventListener("submit", (e) => {
    e.preventDefault();
    const input = byId<HTMLTextAreaElement>("feedback");
    const text = input.value.trim();
    if (!text) return;
    view
      .submitFeedback(text)
      .then(() => {
        input.value = "";
      })
      .catch(showError);
  });
}

wire();
