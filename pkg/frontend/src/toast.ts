/** Transient message stack; server errors (409/416/422) land here. */

import { ApiError } from "./api.js";

export class Toasts {
  constructor(private readonly host: HTMLElement) {}

  show(message: string, kind: "error" | "info" = "error"): void {
    const node = document.createElement("div");
    node.className = `toast toast-${kind}`;
    node.textContent = message;
    this.host.appendChild(node);
    setTimeout(() => node.remove(), 6000);
  }

  error(err: unknown): void {
    if (err instanceof ApiError) {
      const detail =
        typeof err.payload.message === "string"
          ? err.payload.message
          : JSON.stringify(err.payload);
      this.show(`${err.status}: ${detail}`);
    } else {
      this.show(err instanceof Error ? err.message : String(err));
    }
  }
}
