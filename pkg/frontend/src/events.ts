/** Event wire format and the human-readable timeline entries built from it. */

export interface AgentEvent {
  seq: number;
  timestamp: string;
  agent: string;
  kind: string;
  payload: Record<string, unknown>;
}

export interface TimelineEntry {
  seq: number;
  agent: string;
  kind: string;
  summary: string;
  preview?: string;
}

/** Format a number for display: four significant digits, no noise. */
export function fmt(value: unknown): string {
  if (typeof value !== "number" || !Number.isFinite(value)) return String(value);
  if (Number.isInteger(value)) return String(value);
  return String(Number(value.toPrecision(4)));
}

function num(payload: Record<string, unknown>, key: string): number | undefined {
  const v = payload[key];
  return typeof v === "number" ? v : undefined;
}

function str(payload: Record<string, unknown>, key: string): string | undefined {
  const v = payload[key];
  return typeof v === "string" ? v : undefined;
}

function rec(
  payload: Record<string, unknown>,
  key: string,
): Record<string, unknown> {
  const v = payload[key];
  return typeof v === "object" && v !== null
    ? (v as Record<string, unknown>)
    : {};
}

function constraintText(payload: Record<string, unknown>): string {
  const constraints = payload["constraints"];
  if (!Array.isArray(constraints)) return "";
  return constraints
    .map((c) => {
      const cc = c as Record<string, unknown>;
      return `${String(cc["kind"])} ≤ ${fmt(cc["bound"])}`;
    })
    .join(", ");
}

function metricsText(metrics: Record<string, unknown>): string {
  const parts: string[] = [];
  if (typeof metrics["discreteness"] === "number")
    parts.push(`M_nd ${fmt(metrics["discreteness"])}`);
  if (typeof metrics["checkerboard"] === "number")
    parts.push(`checkerboard ${fmt(metrics["checkerboard"])}`);
  if (typeof metrics["connected"] === "boolean")
    parts.push(metrics["connected"] ? "connected" : "disconnected");
  if (typeof metrics["termination"] === "string")
    parts.push(
      `${metrics["termination"]} (${fmt(metrics["iterations"])} iterations)`,
    );
  return parts.join(", ");
}

/** One entry per event: what happened, in words, plus an optional detail line. */
export function summarize(event: AgentEvent): TimelineEntry {
  const p = event.payload ?? {};
  let summary: string;
  let preview: string | undefined;

  switch (event.kind) {
    case "formulated": {
      summary = `problem v${fmt(num(p, "version"))}: minimize ${str(p, "objective")}`;
      const constraints = constraintText(p);
      if (constraints) summary += ` subject to ${constraints}`;
      preview = str(p, "file");
      break;
    }
    case "finding": {
      summary = `${str(p, "code")} (${str(p, "severity")}): ${str(p, "message")}`;
      preview = str(p, "path");
      break;
    }
    case "corrected": {
      const changes = Array.isArray(p["changes"])
        ? (p["changes"] as Record<string, unknown>[])
            .map((c) => String(c["path"]))
            .join(", ")
        : "";
      summary = `problem v${fmt(num(p, "version"))}: corrected ${changes}`;
      preview = str(p, "file");
      break;
    }
    case "escalated": {
      const directive = rec(p, "directive");
      summary = `escalated to ${str(directive, "target")} (round ${fmt(num(p, "loop"))}): ${str(directive, "rationale")}`;
      break;
    }
    case "planned": {
      const params = rec(p, "params");
      summary = `plan v${fmt(num(p, "version"))}: ${str(params, "method")}, move limit ${fmt(params["move_limit"])}, r_min ${fmt(params["r_min"])}, up to ${fmt(params["max_iterations"])} iterations`;
      preview = str(p, "file");
      break;
    }
    case "run_started":
      summary = `run ${fmt(num(p, "run"))} started from plan v${fmt(num(p, "plan"))}`;
      break;
    case "run_finished": {
      const error = str(p, "error_code");
      summary = error
        ? `run ${fmt(num(p, "run"))} failed: ${error} after ${fmt(num(p, "iterations"))} iterations`
        : `run ${fmt(num(p, "run"))}: ${str(p, "termination")} after ${fmt(num(p, "iterations"))} iterations, objective ${fmt(num(p, "final_objective"))}`;
      preview = str(p, "density_image");
      break;
    }
    case "diagnosed":
      summary = `${str(p, "error_code")}: ${str(p, "explanation")}`;
      break;
    case "verdict": {
      summary =
        p["accepted"] === true
          ? "all criteria passed"
          : `rejected at ${str(p, "first_failed")}`;
      preview = metricsText(rec(p, "metrics"));
      break;
    }
    case "directive":
      summary = `${str(p, "action")} → ${str(p, "target")}: ${str(p, "rationale")}`;
      break;
    case "accepted":
      summary = `design accepted: objective ${fmt(num(p, "objective"))} after ${fmt(num(p, "iterations"))} iterations`;
      preview = str(p, "report");
      break;
    case "aborted":
      summary = `session aborted: ${str(p, "reason")}`;
      break;
    default:
      summary = event.kind;
      preview = JSON.stringify(p);
  }

  return { seq: event.seq, agent: event.agent, kind: event.kind, summary, preview };
}
