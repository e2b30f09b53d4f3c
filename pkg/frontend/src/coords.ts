/**
 * Mapping between ordered matrix indices, downsampled image pixels, and
 * canvas pixels. Tile responses give an affine contract: image pixel
 * column c covers ordered indices [origin + c*factor, origin + (c+1)*factor).
 * Keeping the heatmap and the strip panel on the same window and factor
 * makes their column grids identical by construction; the functions here
 * are where that promise is kept.
 */

/** Half-open viewport window in ordered-index units. */
export interface Window2D {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export interface Span {
  lo: number;
  hi: number;
}

/** Image width the server produces for a span at a block factor. */
export function imagePixels(lo: number, hi: number, factor: number): number {
  return Math.ceil((hi - lo) / factor);
}

/** Image pixel column covering an ordered index. */
export function indexToImageCol(
  index: number,
  origin: number,
  factor: number,
): number {
  return Math.floor((index - origin) / factor);
}

/** First ordered index covered by an image pixel column. */
export function imageColToIndex(
  col: number,
  origin: number,
  factor: number,
): number {
  return origin + col * factor;
}

/**
 * Canvas x of the left edge of an ordered column, as actually drawn:
 * the index is first quantized to the fetched image's pixel grid, then
 * the image is scaled onto the canvas.
 */
export function drawnColumnX(
  index: number,
  origin: number,
  factor: number,
  imageWidth: number,
  canvasWidth: number,
): number {
  return indexToImageCol(index, origin, factor) * (canvasWidth / imageWidth);
}

/** Ordered index under a canvas x for a viewport spanning [lo, hi). */
export function canvasXToIndex(
  x: number,
  lo: number,
  hi: number,
  canvasWidth: number,
): number {
  const raw = lo + (x / canvasWidth) * (hi - lo);
  return Math.min(hi - 1, Math.max(lo, Math.floor(raw)));
}

/** Canvas x of an ordered index under the continuous viewport mapping. */
export function indexToCanvasX(
  index: number,
  lo: number,
  hi: number,
  canvasWidth: number,
): number {
  return ((index - lo) / (hi - lo)) * canvasWidth;
}

/** Round a window out to integers, at least one index per side. */
export function integerWindow(win: Window2D): Window2D {
  const x0 = Math.floor(win.x0);
  const y0 = Math.floor(win.y0);
  return {
    x0,
    y0,
    x1: Math.max(x0 + 1, Math.ceil(win.x1)),
    y1: Math.max(y0 + 1, Math.ceil(win.y1)),
  };
}

function clampSpan(lo: number, hi: number, m: number): Span {
  const span = Math.min(hi - lo, m);
  let start = lo;
  if (start < 0) start = 0;
  if (start + span > m) start = m - span;
  return { lo: start, hi: start + span };
}

/** Slide a window, keeping its size, inside [0, m)². */
export function panWindow(
  win: Window2D,
  dx: number,
  dy: number,
  m: number,
): Window2D {
  const x = clampSpan(win.x0 + dx, win.x1 + dx, m);
  const y = clampSpan(win.y0 + dy, win.y1 + dy, m);
  return { x0: x.lo, x1: x.hi, y0: y.lo, y1: y.hi };
}

/**
 * Rescale a window about a focus point in ordered-index coordinates.
 * scale < 1 zooms in. The span is clamped to [minSpan, m] and the
 * result stays inside [0, m)².
 */
export function zoomWindow(
  win: Window2D,
  focusX: number,
  focusY: number,
  scale: number,
  m: number,
  minSpan = 4,
): Window2D {
  const spanX = Math.min(Math.max((win.x1 - win.x0) * scale, minSpan), m);
  const spanY = Math.min(Math.max((win.y1 - win.y0) * scale, minSpan), m);
  const fx = (focusX - win.x0) / (win.x1 - win.x0);
  const fy = (focusY - win.y0) / (win.y1 - win.y0);
  const x = clampSpan(focusX - fx * spanX, focusX + (1 - fx) * spanX, m);
  const y = clampSpan(focusY - fy * spanY, focusY + (1 - fy) * spanY, m);
  return { x0: x.lo, x1: x.hi, y0: y.lo, y1: y.hi };
}

export function fullWindow(m: number): Window2D {
  return { x0: 0, y0: 0, x1: m, y1: m };
}
