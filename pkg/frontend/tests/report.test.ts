import { describe, expect, it } from "vitest";
import { renderMarkdown } from "../src/report.js";
import { fixtureText } from "./helpers.js";

describe("renderMarkdown", () => {
  const report = fixtureText("report.md");

  it("renders the session report's structure", () => {
    const html = renderMarkdown(report);
    expect(html).toContain("<h1>Optimization report</h1>");
    expect(html).toContain("<h2>Formulation</h2>");
    expect(html).toContain("<h2>Configuration</h2>");
    expect(html).toContain("<h2>Critique</h2>");
    expect(html).toContain("<table>");
    expect(html).toContain("<th>parameter</th>");
    expect(html).toContain("<td>oc</td>");
    expect(html).toContain("<li><strong>output_validity</strong>");
    expect(html).toContain("<code>converged_objective_window</code>");
  });

  it("routes image paths through the resolver", () => {
    const html = renderMarkdown(report, (path) => `http://svc/artifacts/${path}`);
    expect(html).toContain(
      '<img alt="Final density" src="http://svc/artifacts/density_v3.png">',
    );
    expect(html).toContain("convergence_v3.png");
  });

  it("escapes markup in the source text", () => {
    const html = renderMarkdown("a <script>alert(1)</script> & b");
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
    expect(html).toContain("&amp;");
  });

  it("groups bullet lines into a single list", () => {
    const html = renderMarkdown("- one\n- two\n\nafter");
    expect(html.match(/<ul>/g)).toHaveLength(1);
    expect(html).toContain("<li>one</li>");
    expect(html).toContain("<li>two</li>");
    expect(html).toContain("<p>after</p>");
  });

  it("joins wrapped lines into one paragraph", () => {
    const html = renderMarkdown("first line\nsecond line\n\nnext");
    expect(html).toContain("<p>first line second line</p>");
  });
});
