/**
 * Headless workbench controller: everything the explorer does, minus the
 * DOM. The browser shell renders from this; tests drive it directly and
 * talk to a real server. Keeping the canvas layer thin means the logic
 * exercised here is the logic the page runs.
 */

import {
  Client,
  DatasetInfo,
  MatrixTile,
  OrderDoc,
  SessionMeta,
  SessionRecord,
  SessionRequestBody,
  StripPanelResponse,
  ValuesWindow,
} from "./api.js";
import {
  Window2D,
  canvasXToIndex,
  integerWindow,
  panWindow,
  zoomWindow,
} from "./coords.js";
import { RequestLog } from "./log.js";
import {
  ViewState,
  activeCrumb,
  beginChildCreation,
  endChildCreation,
  navigate,
  newViewState,
  openRoot,
  pushChild,
  setSelection,
  setViewport,
  snapSelection,
  stepIMin,
} from "./state.js";

/** Server-side cap on raw value windows; hover uses values only below it. */
export const VALUES_WINDOW_LIMIT = 128;

export interface HoverInfo {
  orderedX: number;
  orderedY: number;
  rowIdX: number;
  rowIdY: number;
  /** Exact proximity when known (raw window fetched or on the diagonal). */
  p: number | null;
}

interface SessionDocs {
  meta: SessionMeta;
  order: OrderDoc;
}

export interface WorkbenchOptions {
  /** Forest size for new sessions; small values keep demos fast. */
  trees?: number;
  seed?: number;
}

export class Workbench {
  readonly client: Client;
  readonly log: RequestLog;
  readonly state: ViewState;
  dataset: DatasetInfo | null = null;

  private readonly docs = new Map<string, SessionDocs>();
  private readonly listeners = new Set<() => void>();
  private readonly defaults: WorkbenchOptions;
  private lastTile: MatrixTile | null = null;
  private valuesCache: ValuesWindow | null = null;
  private valuesKey = "";

  constructor(base: string, options: WorkbenchOptions = {}) {
    this.log = new RequestLog();
    this.client = new Client(base, this.log);
    this.state = newViewState();
    this.defaults = options;
  }

  onChange(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  private async ensureDocs(sessionId: string): Promise<SessionDocs> {
    const hit = this.docs.get(sessionId);
    if (hit) return hit;
    const [meta, order] = await Promise.all([
      this.client.getMeta(sessionId),
      this.client.getOrder(sessionId),
    ]);
    const entry = { meta, order };
    this.docs.set(sessionId, entry);
    return entry;
  }

  activeSessionId(): string | null {
    return activeCrumb(this.state)?.sessionId ?? null;
  }

  activeDocs(): SessionDocs | null {
    const id = this.activeSessionId();
    return id ? (this.docs.get(id) ?? null) : null;
  }

  viewport(): Window2D | null {
    return activeCrumb(this.state)?.viewport ?? null;
  }

  async uploadCsv(csv: string): Promise<DatasetInfo> {
    this.dataset = await this.client.uploadDataset(csv);
    this.notify();
    return this.dataset;
  }

  /** Cluster the uploaded dataset and make it the breadcrumb root. */
  async createRoot(
    params: Partial<SessionRequestBody> = {},
  ): Promise<SessionRecord> {
    if (!this.dataset) throw new Error("upload a dataset first");
    const body: SessionRequestBody = {
      dataset_id: this.dataset.dataset_id,
      i_min: this.state.iMin,
      ...this.sessionDefaults(),
      ...params,
    };
    const record = await this.client.createSession(body);
    const done = await this.client.waitDone(record.session_id);
    const docs = await this.ensureDocs(done.session_id);
    openRoot(this.state, done.session_id, docs.meta.m);
    this.resetViewCaches();
    this.notify();
    return done;
  }

  private sessionDefaults(): Partial<SessionRequestBody> {
    const out: Partial<SessionRequestBody> = {};
    if (this.defaults.trees !== undefined) out.trees = this.defaults.trees;
    if (this.defaults.seed !== undefined) out.seed = this.defaults.seed;
    return out;
  }

  setIMin(value: number): void {
    this.state.iMin = stepIMin(value);
    this.notify();
  }

  /** Snap a diagonal drag (ordered-index coordinates) to whole rows. */
  select(a: number, b: number): void {
    const crumb = activeCrumb(this.state);
    if (!crumb) return;
    setSelection(this.state, snapSelection(a, b, crumb.m));
    this.notify();
  }

  clearSelection(): void {
    setSelection(this.state, null);
    this.notify();
  }

  canRecluster(): boolean {
    const crumb = activeCrumb(this.state);
    return (
      this.state.selection !== null &&
      crumb !== null &&
      !crumb.pendingChild
    );
  }

  /**
   * Launch a child session on the selected block with the slider's i_min,
   * wait for it, and step the breadcrumb into it. One creation may be in
   * flight per level; a second submit on the same level is refused.
   */
  async recluster(
    params: Partial<SessionRequestBody> = {},
  ): Promise<SessionRecord> {
    const selection = this.state.selection;
    const crumb = activeCrumb(this.state);
    if (!selection || !crumb) throw new Error("select a diagonal block first");
    if (!beginChildCreation(this.state)) {
      throw new Error("a re-cluster from this level is already running");
    }
    const level = this.state.active;
    this.notify();
    try {
      const body: SessionRequestBody = {
        parent: crumb.sessionId,
        range: [selection.lo, selection.hi],
        i_min: this.state.iMin,
        ...this.sessionDefaults(),
        ...params,
      };
      const record = await this.client.createSession(body);
      const done = await this.client.waitDone(record.session_id);
      const docs = await this.ensureDocs(done.session_id);
      this.state.active = level;
      pushChild(
        this.state,
        done.session_id,
        [selection.lo, selection.hi],
        docs.meta.m,
      );
      this.resetViewCaches();
      return done;
    } finally {
      endChildCreation(this.state, level);
      this.notify();
    }
  }

  /** Jump to a breadcrumb level; its last viewport comes back with it. */
  async goTo(level: number): Promise<void> {
    navigate(this.state, level);
    const id = this.activeSessionId();
    if (id) await this.ensureDocs(id);
    this.resetViewCaches();
    this.notify();
  }

  private resetViewCaches(): void {
    this.lastTile = null;
    this.valuesCache = null;
    this.valuesKey = "";
  }

  setViewportWindow(win: Window2D): void {
    setViewport(this.state, win);
    this.notify();
  }

  zoomAt(focusX: number, focusY: number, scale: number): void {
    const crumb = activeCrumb(this.state);
    if (!crumb) return;
    setViewport(
      this.state,
      zoomWindow(crumb.viewport, focusX, focusY, scale, crumb.m),
    );
    this.notify();
  }

  panBy(dx: number, dy: number): void {
    const crumb = activeCrumb(this.state);
    if (!crumb) return;
    setViewport(this.state, panWindow(crumb.viewport, dx, dy, crumb.m));
    this.notify();
  }

  /** Fetch the heatmap tile for the active viewport at a pixel budget. */
  async fetchTile(px: number): Promise<MatrixTile> {
    const id = this.activeSessionId();
    const viewport = this.viewport();
    if (!id || !viewport) throw new Error("no active session");
    const win = integerWindow(viewport);
    const tile = await this.client.matrixTile(id, { ...win, px });
    this.lastTile = tile;
    return tile;
  }

  /**
   * Fetch the strip panel for the columns of the last heatmap tile, at
   * the tile's own block factor, so both panels share one column grid.
   */
  async fetchStrips(px: number): Promise<StripPanelResponse> {
    const id = this.activeSessionId();
    const viewport = this.viewport();
    if (!id || !viewport) throw new Error("no active session");
    const docs = this.docs.get(id);
    const tile = this.lastTile;
    const win = tile
      ? { x0: tile.transform.window[0], x1: tile.transform.window[2] }
      : integerWindow(viewport);
    const hasLabels = this.dataset?.has_labels ?? false;
    return this.client.strips(id, {
      x0: win.x0,
      x1: win.x1,
      px,
      factor: tile?.transform.factor,
      types: hasLabels && (docs ? this.state.strips.types : false),
      shared: this.state.strips.shared,
    });
  }

  setTypesVisible(visible: boolean): void {
    this.state.strips.types = visible;
    this.notify();
  }

  setSharedCalibration(shared: boolean): void {
    this.state.strips.shared = shared;
    this.notify();
  }

  /**
   * Keep the raw-value window in sync with a small viewport. Does
   * nothing for viewports wider than the server's window cap; hover
   * then reports values only on the diagonal.
   */
  async ensureValues(): Promise<void> {
    const id = this.activeSessionId();
    const viewport = this.viewport();
    if (!id || !viewport) return;
    const win = integerWindow(viewport);
    if (
      win.x1 - win.x0 > VALUES_WINDOW_LIMIT ||
      win.y1 - win.y0 > VALUES_WINDOW_LIMIT
    ) {
      this.valuesCache = null;
      this.valuesKey = "";
      return;
    }
    const key = `${id}:${win.x0},${win.y0},${win.x1},${win.y1}`;
    if (key === this.valuesKey && this.valuesCache) return;
    this.valuesCache = await this.client.values(id, win);
    this.valuesKey = key;
    this.notify();
  }

  /** Displayed ordered-index to original row id mapping. */
  rowIdAt(orderedIndex: number): number {
    const docs = this.activeDocs();
    if (!docs) throw new Error("session documents not loaded");
    const rowId = docs.order.ordered_row_ids[orderedIndex];
    if (rowId === undefined) {
      throw new Error(`ordered index ${orderedIndex} out of range`);
    }
    return rowId;
  }

  /** What the status line shows for a canvas position. */
  hoverAt(
    canvasX: number,
    canvasY: number,
    canvasWidth: number,
    canvasHeight: number,
  ): HoverInfo | null {
    const viewport = this.viewport();
    const docs = this.activeDocs();
    if (!viewport || !docs) return null;
    const orderedX = canvasXToIndex(
      canvasX,
      viewport.x0,
      viewport.x1,
      canvasWidth,
    );
    const orderedY = canvasXToIndex(
      canvasY,
      viewport.y0,
      viewport.y1,
      canvasHeight,
    );
    let p: number | null = null;
    const cache = this.valuesCache;
    if (cache) {
      const [x0, y0, x1, y1] = cache.window;
      if (orderedX >= x0 && orderedX < x1 && orderedY >= y0 && orderedY < y1) {
        p = cache.values[orderedY - y0]?.[orderedX - x0] ?? null;
      }
    }
    if (p === null && orderedX === orderedY) p = 1.0;
    return {
      orderedX,
      orderedY,
      rowIdX: this.rowIdAt(orderedX),
      rowIdY: this.rowIdAt(orderedY),
      p,
    };
  }

  exportLog(): string {
    return this.log.toJSON();
  }
}
