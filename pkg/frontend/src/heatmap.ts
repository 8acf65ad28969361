/** Density heatmap rendering.  The page never computes anything on
 * densities beyond this colormap: 0 maps to white, 1 to black, the usual
 * convention for material layouts.
 */

export interface DensityGrid {
  nx: number;
  ny: number;
  /** Row-major, top row first, length nx*ny, values in [0, 1]. */
  values: ArrayLike<number>;
}

export type DensitySource =
  | { kind: "image"; url: string }
  | { kind: "grid"; grid: DensityGrid };

/** Grayscale RGBA pixels for a density grid (0 -> white, 1 -> black). */
export function densityToRgba(grid: DensityGrid): Uint8ClampedArray {
  const n = grid.nx * grid.ny;
  if (grid.values.length !== n) {
    throw new Error(
      `expected ${n} values for a ${grid.nx}x${grid.ny} grid, got ${grid.values.length}`,
    );
  }
  const pixels = new Uint8ClampedArray(n * 4);
  for (let i = 0; i < n; i++) {
    const v = Math.min(1, Math.max(0, grid.values[i]));
    const gray = Math.round(255 * (1 - v));
    pixels[4 * i] = gray;
    pixels[4 * i + 1] = gray;
    pixels[4 * i + 2] = gray;
    pixels[4 * i + 3] = 255;
  }
  return pixels;
}

/** Draw a density field onto a canvas, from either the served image or a
 * raw grid.  The canvas is sized to the source; CSS does the scaling.
 */
export async function renderDensity(
  canvas: HTMLCanvasElement,
  source: DensitySource,
): Promise<void> {
  const ctx = canvas.getContext("2d");
  if (!ctx) return; // no 2d context in this environment
  if (source.kind === "grid") {
    canvas.width = source.grid.nx;
    canvas.height = source.grid.ny;
    const image = ctx.createImageData(source.grid.nx, source.grid.ny);
    image.data.set(densityToRgba(source.grid));
    ctx.putImageData(image, 0, 0);
    return;
  }
  const image = new Image();
  image.src = source.url;
  await image.decode();
  canvas.width = image.naturalWidth;
  canvas.height = image.naturalHeight;
  ctx.drawImage(image, 0, 0);
}
