/**
 * Stroke model and deterministic rasterization.
 *
 * The grid submitted to the server is produced here, in plain TypeScript,
 * not read back from the display canvas: the same stroke list always
 * yields a byte-identical grid, and the request payload is exactly what
 * the server-side featurizer sees.
 */

export interface Point {
  x: number;
  y: number;
}

export interface Stroke {
  points: Point[];
}

export interface RasterGrid {
  width: number;
  height: number;
  /** Row-major grayscale bytes: 255 white background, 0 black ink. */
  data: Uint8Array;
}

export const DEFAULT_RESOLUTION = 256;
export const DEFAULT_PEN_WIDTH = 3;

function stampDisc(
  data: Uint8Array,
  resolution: number,
  cx: number,
  cy: number,
  radius: number,
): void {
  const r2 = radius * radius;
  const rowLo = Math.max(0, Math.floor(cy - radius - 1));
  const rowHi = Math.min(resolution - 1, Math.ceil(cy + radius + 1));
  const colLo = Math.max(0, Math.floor(cx - radius - 1));
  const colHi = Math.min(resolution - 1, Math.ceil(cx + radius + 1));
  for (let row = rowLo; row <= rowHi; row++) {
    const dy = row + 0.5 - cy;
    for (let col = colLo; col <= colHi; col++) {
      const dx = col + 0.5 - cx;
      if (dx * dx + dy * dy <= r2) {
        data[row * resolution + col] = 0;
      }
    }
  }
}

/** Rasterize strokes onto a white square grid with round black pen. */
export function rasterize(
  strokes: Stroke[],
  resolution: number = DEFAULT_RESOLUTION,
  penWidth: number = DEFAULT_PEN_WIDTH,
): RasterGrid {
  const data = new Uint8Array(resolution * resolution).fill(255);
  const radius = penWidth / 2;
  for (const stroke of strokes) {
    const pts = stroke.points;
    if (pts.length === 0) continue;
    stampDisc(data, resolution, pts[0].x, pts[0].y, radius);
    for (let i = 1; i < pts.length; i++) {
      const a = pts[i - 1];
      const b = pts[i];
      const length = Math.hypot(b.x - a.x, b.y - a.y);
      const steps = Math.max(1, Math.ceil(length / 0.5));
      for (let s = 1; s <= steps; s++) {
        const t = s / steps;
        stampDisc(data, resolution, a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t, radius);
      }
    }
  }
  return { width: resolution, height: resolution, data };
}

/** Base64 of the raw grid bytes (the /retrieve pixel payload). */
export function gridToBase64(grid: RasterGrid): string {
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < grid.data.length; i += chunk) {
    binary += String.fromCharCode(...grid.data.subarray(i, i + chunk));
  }
  return btoa(binary);
}

export function isBlank(strokes: Stroke[]): boolean {
  return strokes.every((s) => s.points.length === 0);
}
