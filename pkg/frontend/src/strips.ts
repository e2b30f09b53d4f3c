/**
 * Feature strip panel pinned under the heatmap. Shares the heatmap
 * tile's column window and block factor so strip columns sit exactly
 * under matrix columns at every zoom level.
 */

import { Workbench } from "./workbench.js";
import { Toasts } from "./toast.js";

export class StripPanel {
  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly labelHost: HTMLElement,
    private readonly bench: Workbench,
    private readonly toasts: Toasts,
  ) {}

  async sync(): Promise<void> {
    if (!this.bench.activeSessionId()) return;
    try {
      const panel = await this.bench.fetchStrips(this.canvas.width);
      const bitmap = await createImageBitmap(
        new Blob([panel.bytes], { type: "image/png" }),
      );
      const rowPitch = panel.stripHeight + 1;
      this.canvas.height = Math.max(1, panel.rows.length * rowPitch - 1) * 2;
      const ctx = this.canvas.getContext("2d");
      if (!ctx) return;
      ctx.imageSmoothingEnabled = false;
      ctx.fillStyle = "#14161a";
      ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
      ctx.drawImage(bitmap, 0, 0, this.canvas.width, this.canvas.height);
      this.renderLabels(panel.rows, rowPitch);
    } catch (err) {
      this.toasts.error(err);
    }
  }

  private renderLabels(rows: string[], rowPitch: number): void {
    this.labelHost.textContent = "";
    const total = Math.max(1, rows.length * rowPitch - 1);
    for (const name of rows) {
      const label = document.createElement("div");
      label.className = "strip-label";
      label.textContent = name;
      label.style.height = `${(rowPitch / total) * 100}%`;
      this.labelHost.appendChild(label);
    }
  }
}
