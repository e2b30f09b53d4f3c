/**
 * Canvas heatmap of the ordered proximity matrix. Pan and zoom refetch
 * tiles for the visible window; a drag that starts on the diagonal turns
 * into a block selection instead of a pan. Tiles are drawn without
 * smoothing so block boundaries stay crisp at any zoom.
 */

import { Workbench } from "./workbench.js";
import { Toasts } from "./toast.js";
import { indexToCanvasX } from "./coords.js";

const REFETCH_DEBOUNCE_MS = 120;
/** A drag counts as "on the diagonal" within this many ordered indices. */
const DIAGONAL_GRAB_FRACTION = 0.02;

type DragMode = "pan" | "select";

export class HeatmapPanel {
  private bitmap: ImageBitmap | null = null;
  private bitmapKey = "";
  private fetchTimer: ReturnType<typeof setTimeout> | null = null;
  private drag: {
    mode: DragMode;
    startX: number;
    startY: number;
    startOrderedX: number;
    startOrderedY: number;
  } | null = null;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly bench: Workbench,
    private readonly toasts: Toasts,
    private readonly onViewChanged: () => void,
    private readonly onHover: (text: string) => void,
  ) {
    canvas.addEventListener("wheel", (e) => this.onWheel(e), {
      passive: false,
    });
    canvas.addEventListener("mousedown", (e) => this.onDown(e));
    window.addEventListener("mousemove", (e) => this.onMove(e));
    window.addEventListener("mouseup", () => this.onUp());
    canvas.addEventListener("mouseleave", () => this.onHover(""));
  }

  /** Redraw from cache immediately and refetch the tile if stale. */
  sync(): void {
    this.draw();
    this.scheduleFetch();
  }

  private viewKey(): string {
    const v = this.bench.viewport();
    if (!v) return "";
    return `${this.bench.activeSessionId()}:${v.x0},${v.y0},${v.x1},${v.y1}`;
  }

  private scheduleFetch(): void {
    if (this.fetchTimer) clearTimeout(this.fetchTimer);
    this.fetchTimer = setTimeout(() => {
      this.fetchTimer = null;
      void this.fetchNow();
    }, REFETCH_DEBOUNCE_MS);
  }

  private async fetchNow(): Promise<void> {
    if (!this.bench.activeSessionId()) return;
    const key = this.viewKey();
    if (key === this.bitmapKey && this.bitmap) {
      this.draw();
      return;
    }
    try {
      const tile = await this.bench.fetchTile(this.canvas.width);
      this.bitmap = await createImageBitmap(
        new Blob([tile.bytes], { type: "image/png" }),
      );
      this.bitmapKey = key;
      await this.bench.ensureValues();
      this.draw();
      this.onViewChanged();
    } catch (err) {
      this.toasts.error(err);
    }
  }

  private draw(): void {
    const ctx = this.canvas.getContext("2d");
    const viewport = this.bench.viewport();
    if (!ctx) return;
    ctx.fillStyle = "#14161a";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    if (!viewport) return;
    if (this.bitmap && this.bitmapKey === this.viewKey()) {
      ctx.imageSmoothingEnabled = false;
      ctx.drawImage(this.bitmap, 0, 0, this.canvas.width, this.canvas.height);
    }
    this.drawSelection(ctx, viewport);
  }

  private drawSelection(
    ctx: CanvasRenderingContext2D,
    viewport: { x0: number; y0: number; x1: number; y1: number },
  ): void {
    const selection = this.bench.state.selection;
    if (!selection) return;
    const x0 = indexToCanvasX(
      selection.lo,
      viewport.x0,
      viewport.x1,
      this.canvas.width,
    );
    const x1 = indexToCanvasX(
      selection.hi,
      viewport.x0,
      viewport.x1,
      this.canvas.width,
    );
    const y0 = indexToCanvasX(
      selection.lo,
      viewport.y0,
      viewport.y1,
      this.canvas.height,
    );
    const y1 = indexToCanvasX(
      selection.hi,
      viewport.y0,
      viewport.y1,
      this.canvas.height,
    );
    ctx.strokeStyle = "#ffb454";
    ctx.lineWidth = 2;
    ctx.strokeRect(x0, y0, x1 - x0, y1 - y0);
  }

  private ordered(e: MouseEvent): { x: number; y: number } | null {
    const viewport = this.bench.viewport();
    if (!viewport) return null;
    const rect = this.canvas.getBoundingClientRect();
    const px = ((e.clientX - rect.left) / rect.width) * this.canvas.width;
    const py = ((e.clientY - rect.top) / rect.height) * this.canvas.height;
    return {
      x: viewport.x0 + (px / this.canvas.width) * (viewport.x1 - viewport.x0),
      y: viewport.y0 + (py / this.canvas.height) * (viewport.y1 - viewport.y0),
    };
  }

  private onWheel(e: WheelEvent): void {
    e.preventDefault();
    const at = this.ordered(e);
    if (!at) return;
    this.bench.zoomAt(at.x, at.y, e.deltaY > 0 ? 1.25 : 0.8);
    this.sync();
  }

  private onDown(e: MouseEvent): void {
    const at = this.ordered(e);
    const viewport = this.bench.viewport();
    if (!at || !viewport) return;
    const grab = (viewport.x1 - viewport.x0) * DIAGONAL_GRAB_FRACTION + 1;
    const mode: DragMode = Math.abs(at.x - at.y) <= grab ? "select" : "pan";
    this.drag = {
      mode,
      startX: e.clientX,
      startY: e.clientY,
      startOrderedX: at.x,
      startOrderedY: at.y,
    };
    if (mode === "select") this.bench.select(at.x, at.x);
  }

  private onMove(e: MouseEvent): void {
    const viewport = this.bench.viewport();
    if (!viewport) return;
    if (this.drag) {
      const at = this.ordered(e);
      if (!at) return;
      if (this.drag.mode === "select") {
        // Project the drag onto the diagonal: blocks pick datapoints.
        const along = (at.x + at.y) / 2;
        this.bench.select(this.drag.startOrderedX, along);
        this.draw();
      } else {
        const rect = this.canvas.getBoundingClientRect();
        const perX = (viewport.x1 - viewport.x0) / rect.width;
        const perY = (viewport.y1 - viewport.y0) / rect.height;
        this.bench.panBy(
          (this.drag.startX - e.clientX) * perX,
          (this.drag.startY - e.clientY) * perY,
        );
        this.drag.startX = e.clientX;
        this.drag.startY = e.clientY;
        this.sync();
      }
      return;
    }
    this.reportHover(e);
  }

  private reportHover(e: MouseEvent): void {
    const rect = this.canvas.getBoundingClientRect();
    if (
      e.clientX < rect.left ||
      e.clientX >= rect.right ||
      e.clientY < rect.top ||
      e.clientY >= rect.bottom
    ) {
      return;
    }
    const px = ((e.clientX - rect.left) / rect.width) * this.canvas.width;
    const py = ((e.clientY - rect.top) / rect.height) * this.canvas.height;
    let info = null;
    try {
      info = this.bench.hoverAt(px, py, this.canvas.width, this.canvas.height);
    } catch {
      return;
    }
    if (!info) return;
    const p = info.p === null ? "–" : info.p.toFixed(3);
    this.onHover(
      `ordered (${info.orderedY}, ${info.orderedX})` +
        `  rows (${info.rowIdY}, ${info.rowIdX})  P=${p}`,
    );
  }

  private onUp(): void {
    if (!this.drag) return;
    const wasSelect = this.drag.mode === "select";
    this.drag = null;
    if (wasSelect) this.draw();
  }
}
