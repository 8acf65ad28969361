/** Convergence chart: parse the per-iteration history artifact and draw
 * objective and constraint series onto a canvas.
 */

export interface HistoryRow {
  iteration: number;
  objective: number;
  constraints: number[];
  change: number;
  beta: number;
  ms: number;
}

/** Parse the run history CSV (`iteration,objective,constraint_*,change,beta,ms`). */
export function parseHistory(csv: string): HistoryRow[] {
  const lines = csv.trim().split("\n");
  if (lines.length < 2) return [];
  const header = lines[0].split(",");
  const col = (name: string) => {
    const at = header.indexOf(name);
    if (at === -1) throw new Error(`history is missing the ${name} column`);
    return at;
  };
  const iteration = col("iteration");
  const objective = col("objective");
  const change = col("change");
  const beta = col("beta");
  const ms = col("ms");
  const constraintCols = header
    .map((name, at) => ({ name, at }))
    .filter(({ name }) => name.startsWith("constraint_"))
    .map(({ at }) => at);

  return lines.slice(1).map((line) => {
    const cells = line.split(",");
    return {
      iteration: Number(cells[iteration]),
      objective: Number(cells[objective]),
      constraints: constraintCols.map((at) => Number(cells[at])),
      change: Number(cells[change]),
      beta: Number(cells[beta]),
      ms: Number(cells[ms]),
    };
  });
}

export interface Rect {
  x: number;
  y: number;
  width: number;
  height: number;
}

export function valueRange(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  return [lo, hi];
}

/** Map a series onto plot coordinates: x spreads over the width in order,
 * y is linear between lo (bottom edge) and hi (top edge).
 */
export function seriesPoints(
  values: number[],
  area: Rect,
  lo: number,
  hi: number,
): Array<[number, number]> {
  const span = hi - lo;
  const step = values.length > 1 ? area.width / (values.length - 1) : 0;
  return values.map((v, i) => {
    const frac = span > 0 ? (v - lo) / span : 0.5;
    return [area.x + step * i, area.y + area.height * (1 - frac)];
  });
}

const MARGIN = 36;

function drawSeries(
  ctx: CanvasRenderingContext2D,
  points: Array<[number, number]>,
  color: string,
): void {
  if (!points.length) return;
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ctx.moveTo(points[0][0], points[0][1]);
  for (const [x, y] of points.slice(1)) ctx.lineTo(x, y);
  ctx.stroke();
}

/** Objective (left axis) and first constraint (right axis) vs iteration. */
export function drawConvergence(
  canvas: HTMLCanvasElement,
  rows: HistoryRow[],
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx || !rows.length) return;
  const width = canvas.width || 480;
  const height = canvas.height || 240;
  canvas.width = width;
  canvas.height = height;
  const area: Rect = {
    x: MARGIN,
    y: 12,
    width: width - 2 * MARGIN,
    height: height - 12 - MARGIN,
  };

  ctx.clearRect(0, 0, width, height);
  ctx.strokeStyle = "#999";
  ctx.lineWidth = 1;
  ctx.strokeRect(area.x, area.y, area.width, area.height);

  const objective = rows.map((r) => r.objective);
  const [olo, ohi] = valueRange(objective);
  drawSeries(ctx, seriesPoints(objective, area, olo, ohi), "#1a1a1a");

  ctx.fillStyle = "#1a1a1a";
  ctx.font = "11px sans-serif";
  ctx.fillText(`objective ${olo.toPrecision(4)} .. ${ohi.toPrecision(4)}`, area.x, height - 8);

  if (rows[0].constraints.length) {
    const constraint = rows.map((r) => r.constraints[0]);
    const [clo, chi] = valueRange(constraint);
    drawSeries(ctx, seriesPoints(constraint, area, clo, chi), "#b3581e");
    ctx.fillStyle = "#b3581e";
    ctx.fillText(
      `constraint ${clo.toPrecision(3)} .. ${chi.toPrecision(3)}`,
      area.x + area.width / 2,
      height - 8,
    );
  }

  ctx.fillStyle = "#666";
  ctx.fillText(`${rows.length} iterations`, area.x, 10);
}
