/** Render the session report (markdown) to HTML.  Covers exactly the
 * constructs the report uses: headings, paragraphs, bullet lists, tables,
 * bold, inline code, and images; everything else stays literal text.
 */

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function inline(text: string): string {
  return escapeHtml(text)
    .replace(/\*\*([^*]+)\*\*/g, "<strong>$1</strong>")
    .replace(/`([^`]+)`/g, "<code>$1</code>");
}

const IMAGE = /^!\[([^\]]*)\]\(([^)]+)\)$/;
const TABLE_DIVIDER = /^\|[\s:|-]+\|$/;

export type UrlResolver = (path: string) => string;

function tableRow(line: string, cell: "td" | "th"): string {
  const cells = line
    .replace(/^\|/, "")
    .replace(/\|$/, "")
    .split("|")
    .map((c) => `<${cell}>${inline(c.trim())}</${cell}>`);
  return `<tr>${cells.join("")}</tr>`;
}

export function renderMarkdown(
  markdown: string,
  resolveUrl: UrlResolver = (path) => path,
): string {
  const lines = markdown.split("\n");
  const html: string[] = [];
  let paragraph: string[] = [];
  let list = false;

  const flushParagraph = () => {
    if (paragraph.length) {
      html.push(`<p>${inline(paragraph.join(" "))}</p>`);
      paragraph = [];
    }
  };
  const closeList = () => {
    if (list) {
      html.push("</ul>");
      list = false;
    }
  };

  for (let i = 0; i < lines.length; i++) {
    const line = lines[i];
    const heading = /^(#{1,4})\s+(.*)$/.exec(line);
    const image = IMAGE.exec(line.trim());

    if (!line.trim()) {
      flushParagraph();
      closeList();
    } else if (heading) {
      flushParagraph();
      closeList();
      const level = heading[1].length;
      html.push(`<h${level}>${inline(heading[2])}</h${level}>`);
    } else if (line.startsWith("- ")) {
      flushParagraph();
      if (!list) {
        html.push("<ul>");
        list = true;
      }
      html.push(`<li>${inline(line.slice(2))}</li>`);
    } else if (image) {
      flushParagraph();
      closeList();
      html.push(
        `<img alt="${escapeHtml(image[1])}" src="${escapeHtml(resolveUrl(image[2]))}">`,
      );
    } else if (
      line.startsWith("|") &&
      i + 1 < lines.length &&
      TABLE_DIVIDER.test(lines[i + 1].trim())
    ) {
      flushParagraph();
      closeList();
      const body: string[] = [];
      let j = i + 2;
      for (; j < lines.length && lines[j].startsWith("|"); j++) {
        body.push(tableRow(lines[j], "td"));
      }
      html.push(
        `<table><thead>${tableRow(line, "th")}</thead>` +
          `<tbody>${body.join("")}</tbody></table>`,
      );
      i = j - 1;
    } else {
      paragraph.push(line.trim());
    }
  }
  flushParagraph();
  closeList();
  return html.join("\n");
}
