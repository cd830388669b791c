import type { Rle } from "./api.js";

/** Count of wound pixels in an RLE mask (runs alternate starting with zeros). */
export function maskPixelCount(rle: Rle): number {
  let total = 0;
  for (let i = 1; i < rle.runs.length; i += 2) {
    total += rle.runs[i];
  }
  return total;
}

/** Decode an RLE mask to a flat Uint8Array of length shape[0] * shape[1]. */
export function decodeRle(rle: Rle): Uint8Array {
  const total = rle.shape.reduce((a, b) => a * b, 1);
  const out = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  for (const run of rle.runs) {
    if (value) {
      out.fill(1, pos, pos + run);
    }
    pos += run;
    value ^= 1;
  }
  if (pos !== total) {
    throw new Error(`runs cover ${pos} of ${total} pixels`);
  }
  return out;
}

/** Absolute shoelace area of a closed polygon. */
export function polygonArea(vertices: number[][]): number {
  let sum = 0;
  for (let i = 0; i < vertices.length; i++) {
    const [x0, y0] = vertices[i];
    const [x1, y1] = vertices[(i + 1) % vertices.length];
    sum += x0 * y1 - x1 * y0;
  }
  return Math.abs(sum) / 2;
}

/**
 * Resample a freehand stroke to at most `maxVertices` points, uniformly by
 * arc length along the closed curve. Keeps the payload bounded before
 * submitting a redraw to the server.
 */
export function resampleStroke(points: number[][], maxVertices = 128): number[][] {
  const cleaned: number[][] = [];
  for (const p of points) {
    const prev = cleaned[cleaned.length - 1];
    if (!prev || prev[0] !== p[0] || prev[1] !== p[1]) {
      cleaned.push([p[0], p[1]]);
    }
  }
  // drop a duplicated closing point
  if (cleaned.length > 1) {
    const [first, last] = [cleaned[0], cleaned[cleaned.length - 1]];
    if (first[0] === last[0] && first[1] === last[1]) {
      cleaned.pop();
    }
  }
  if (cleaned.length < 3) {
    throw new Error(`stroke needs at least 3 distinct points, got ${cleaned.length}`);
  }
  if (cleaned.length <= maxVertices) {
    return cleaned;
  }

  const cumulative = [0];
  for (let i = 0; i < cleaned.length; i++) {
    const [x0, y0] = cleaned[i];
    const [x1, y1] = cleaned[(i + 1) % cleaned.length];
    cumulative.push(cumulative[i] + Math.hypot(x1 - x0, y1 - y0));
  }
  const total = cumulative[cleaned.length];
  const out: number[][] = [];
  let seg = 0;
  for (let k = 0; k < maxVertices; k++) {
    const target = (k * total) / maxVertices;
    while (seg < cleaned.length - 1 && cumulative[seg + 1] <= target) {
      seg += 1;
    }
    const segLen = cumulative[seg + 1] - cumulative[seg];
    const t = segLen > 0 ? (target - cumulative[seg]) / segLen : 0;
    const [x0, y0] = cleaned[seg];
    const [x1, y1] = cleaned[(seg + 1) % cleaned.length];
    out.push([x0 + t * (x1 - x0), y0 + t * (y1 - y0)]);
  }
  return out;
}
