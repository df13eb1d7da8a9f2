/** Correlation heatmap rendering.
 *
 * `renderPixels` is a pure function from a matrix to an RGBA buffer so the
 * drawing can be tested pixel-by-pixel without a browser; `paintHeatmap` is
 * the thin canvas wrapper used by the page. Cells are square and unlabeled,
 * colored on a diverging blue-white-red scale anchored at -1 / 0 / +1.
 */

export type Rgb = readonly [number, number, number];

export const NEGATIVE_ANCHOR: Rgb = [33, 102, 172]; // -1, deep blue
export const ZERO_ANCHOR: Rgb = [255, 255, 255]; //     0, white
export const POSITIVE_ANCHOR: Rgb = [178, 24, 43]; //  +1, deep red

/** Linear interpolation from white at 0 toward the signed anchor at +-1.
 * Values outside [-1, 1] clamp to the anchors. */
export function colorFor(value: number): Rgb {
  if (!Number.isFinite(value)) {
    throw new Error(`cannot color non-finite correlation ${value}`);
  }
  const v = Math.max(-1, Math.min(1, value));
  const anchor = v < 0 ? NEGATIVE_ANCHOR : POSITIVE_ANCHOR;
  const t = Math.abs(v);
  return [
    Math.round(ZERO_ANCHOR[0] + (anchor[0] - ZERO_ANCHOR[0]) * t),
    Math.round(ZERO_ANCHOR[1] + (anchor[1] - ZERO_ANCHOR[1]) * t),
    Math.round(ZERO_ANCHOR[2] + (anchor[2] - ZERO_ANCHOR[2]) * t),
  ];
}

export interface PixelImage {
  width: number;
  height: number;
  /** RGBA, row-major from the top-left, matching ImageData layout. */
  data: Uint8ClampedArray<ArrayBuffer>;
}

export function renderPixels(matrix: number[][], cellSize = 1): PixelImage {
  const n = matrix.length;
  if (n === 0) throw new Error("cannot render an empty matrix");
  if (!Number.isInteger(cellSize) || cellSize < 1) {
    throw new Error(`cell size must be a positive integer, got ${cellSize}`);
  }
  for (const row of matrix) {
    if (row.length !== n) throw new Error("matrix must be square");
  }
  const side = n * cellSize;
  const data = new Uint8ClampedArray(new ArrayBuffer(side * side * 4));
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      const [r, g, b] = colorFor(matrix[i][j]);
      for (let py = i * cellSize; py < (i + 1) * cellSize; py++) {
        for (let px = j * cellSize; px < (j + 1) * cellSize; px++) {
          const k = (py * side + px) * 4;
          data[k] = r;
          data[k + 1] = g;
          data[k + 2] = b;
          data[k + 3] = 255;
        }
      }
    }
  }
  return { width: side, height: side, data };
}

/** Draw the matrix onto a canvas at the largest integer cell size that fits
 * `targetSide`, resizing the canvas to the exact square board. */
export function paintHeatmap(
  canvas: HTMLCanvasElement,
  matrix: number[][],
  targetSide = 480,
): void {
  const n = matrix.length;
  if (n === 0) throw new Error("cannot render an empty matrix");
  const cell = Math.max(1, Math.floor(targetSide / n));
  const img = renderPixels(matrix, cell);
  canvas.width = img.width;
  canvas.height = img.height;
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2d canvas context unavailable");
  ctx.putImageData(new ImageData(img.data, img.width, img.height), 0, 0);
}
