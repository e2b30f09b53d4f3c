/**
 * Typed client for the clustering service's /v1 HTTP API. Everything the
 * workbench knows about the server comes through here; artifacts on disk
 * are never touched directly.
 */

export interface DatasetInfo {
  dataset_id: string;
  m: number;
  q: number;
  has_labels: boolean;
  created: boolean;
}

export interface ParentRef {
  session_id: string;
  lo: number;
  hi: number;
}

export interface SessionRecord {
  session_id: string;
  status: "queued" | "running" | "done" | "failed" | string;
  dataset_id: string;
  config: Record<string, unknown>;
  parent: ParentRef | null;
  error: Record<string, unknown> | null;
  created: boolean;
}

export interface SessionMeta {
  session_id: string;
  status: string;
  dataset: Record<string, unknown>;
  config: Record<string, unknown>;
  parent: ParentRef | null;
  lineage: ParentRef[];
  timings_s: Record<string, number>;
  m: number;
}

/** orders.json document: leaf orders plus the row-id permutations. */
export interface OrderDoc {
  format: string;
  version: number;
  display: "hc" | "olo";
  hc: number[];
  olo: number[] | null;
  row_ids: number[];
  ordered_row_ids: number[];
  costs: { hc: number; olo: number | null };
}

/** Body of POST /sessions. Exactly one of dataset_id / parent. */
export interface SessionRequestBody {
  dataset_id?: string;
  parent?: string;
  range?: [number, number];
  trees?: number;
  i_min?: number;
  m_min?: number;
  linkage?: string;
  olo?: boolean;
  seed?: number;
}

/** Affine mapping carried in tile and strip response headers. */
export interface TileTransform {
  window: [number, number, number, number];
  factor: number;
  origin: [number, number];
}

export interface MatrixTile {
  bytes: ArrayBuffer;
  transform: TileTransform;
}

export interface StripPanelResponse {
  bytes: ArrayBuffer;
  window: [number, number];
  factor: number;
  origin: number;
  rows: string[];
  stripHeight: number;
}

export interface ValuesWindow {
  window: [number, number, number, number];
  values: number[][];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly payload: Record<string, unknown>,
  ) {
    super(
      typeof payload.message === "string"
        ? `${status}: ${payload.message}`
        : `HTTP ${status}`,
    );
    this.name = "ApiError";
  }
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

/** Sink for server mutations, so a session can be replayed elsewhere. */
export interface MutationRecorder {
  recordDataset(csv: string, responseId: string): void;
  recordSession(body: SessionRequestBody, responseId: string): void;
}

async function errorPayload(response: Response): Promise<Record<string, unknown>> {
  try {
    const body = await response.json();
    return typeof body === "object" && body !== null ? body : { body };
  } catch {
    return { message: response.statusText };
  }
}

function parseTransform(headers: Headers): TileTransform {
  const win = (headers.get("X-Window") ?? "").split(",").map(Number);
  const origin = (headers.get("X-Index-Origin") ?? "").split(",").map(Number);
  return {
    window: [win[0] ?? 0, win[1] ?? 0, win[2] ?? 0, win[3] ?? 0],
    factor: Number(headers.get("X-Factor") ?? 1),
    origin: [origin[0] ?? 0, origin[1] ?? 0],
  };
}

export class Client {
  private readonly fetchFn: FetchLike;

  constructor(
    readonly base: string,
    readonly log?: MutationRecorder,
    fetchFn?: FetchLike,
  ) {
    this.fetchFn =
      fetchFn ?? ((input, init) => globalThis.fetch(input, init));
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.base + path, init);
    if (!response.ok) {
      throw new ApiError(response.status, await errorPayload(response));
    }
    return (await response.json()) as T;
  }

  async uploadDataset(csv: string): Promise<DatasetInfo> {
    const info = await this.json<DatasetInfo>("/v1/datasets", {
      method: "POST",
      headers: { "Content-Type": "text/csv" },
      body: csv,
    });
    this.log?.recordDataset(csv, info.dataset_id);
    return info;
  }

  getDataset(id: string): Promise<DatasetInfo> {
    return this.json(`/v1/datasets/${id}`);
  }

  async createSession(body: SessionRequestBody): Promise<SessionRecord> {
    const record = await this.json<SessionRecord>("/v1/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    this.log?.recordSession(body, record.session_id);
    return record;
  }

  getSession(id: string): Promise<SessionRecord> {
    return this.json(`/v1/sessions/${id}`);
  }

  /** Poll until the job leaves the queue; throws ApiError on failure. */
  async waitDone(
    id: string,
    opts: { intervalMs?: number; timeoutMs?: number } = {},
  ): Promise<SessionRecord> {
    const interval = opts.intervalMs ?? 250;
    const deadline = Date.now() + (opts.timeoutMs ?? 120_000);
    for (;;) {
      const record = await this.getSession(id);
      if (record.status === "done") return record;
      if (record.status === "failed") {
        throw new ApiError(500, record.error ?? { message: "session failed" });
      }
      if (Date.now() > deadline) {
        throw new ApiError(408, { message: `session ${id} still ${record.status}` });
      }
      await new Promise((r) => setTimeout(r, interval));
    }
  }

  getMeta(id: string): Promise<SessionMeta> {
    return this.json(`/v1/sessions/${id}/meta`);
  }

  getOrder(id: string): Promise<OrderDoc> {
    return this.json(`/v1/sessions/${id}/order`);
  }

  getDendrogram(id: string): Promise<Record<string, unknown>> {
    return this.json(`/v1/sessions/${id}/dendrogram`);
  }

  async matrixTile(
    id: string,
    window: { x0: number; y0: number; x1: number; y1: number; px: number },
  ): Promise<MatrixTile> {
    const q = new URLSearchParams({
      x0: String(window.x0),
      y0: String(window.y0),
      x1: String(window.x1),
      y1: String(window.y1),
      px: String(window.px),
    });
    const response = await this.fetchFn(
      `${this.base}/v1/sessions/${id}/matrix?${q}`,
    );
    if (!response.ok) {
      throw new ApiError(response.status, await errorPayload(response));
    }
    return {
      bytes: await response.arrayBuffer(),
      transform: parseTransform(response.headers),
    };
  }

  async strips(
    id: string,
    opts: {
      x0?: number;
      x1?: number;
      px?: number;
      factor?: number;
      types?: boolean;
      shared?: boolean;
    } = {},
  ): Promise<StripPanelResponse> {
    const q = new URLSearchParams();
    if (opts.x0 !== undefined) q.set("x0", String(opts.x0));
    if (opts.x1 !== undefined) q.set("x1", String(opts.x1));
    if (opts.px !== undefined) q.set("px", String(opts.px));
    if (opts.factor !== undefined) q.set("factor", String(opts.factor));
    if (opts.types !== undefined) q.set("types", String(opts.types));
    if (opts.shared !== undefined) q.set("shared", String(opts.shared));
    const suffix = q.size > 0 ? `?${q}` : "";
    const response = await this.fetchFn(
      `${this.base}/v1/sessions/${id}/strips${suffix}`,
    );
    if (!response.ok) {
      throw new ApiError(response.status, await errorPayload(response));
    }
    const win = (response.headers.get("X-Window") ?? "0,0")
      .split(",")
      .map(Number);
    return {
      bytes: await response.arrayBuffer(),
      window: [win[0] ?? 0, win[1] ?? 0],
      factor: Number(response.headers.get("X-Factor") ?? 1),
      origin: Number(response.headers.get("X-Index-Origin") ?? 0),
      rows: (response.headers.get("X-Rows") ?? "").split(",").filter(Boolean),
      stripHeight: Number(response.headers.get("X-Strip-Height") ?? 1),
    };
  }

  values(
    id: string,
    window: { x0: number; y0: number; x1: number; y1: number },
  ): Promise<ValuesWindow> {
    const q = new URLSearchParams({
      x0: String(window.x0),
      y0: String(window.y0),
      x1: String(window.x1),
      y1: String(window.y1),
    });
    return this.json(`/v1/sessions/${id}/values?${q}`);
  }
}
