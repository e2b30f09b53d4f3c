/**
 * Every server mutation the workbench performs is appended here, so the
 * whole lineage tree can be rebuilt on a fresh server by replaying the
 * log in order. Reads are not logged; they never change server state.
 */

import {
  Client,
  FetchLike,
  MutationRecorder,
  SessionRequestBody,
} from "./api.js";

export type LogEntry =
  | { kind: "dataset"; csv: string; responseId: string }
  | { kind: "session"; body: SessionRequestBody; responseId: string };

export class RequestLog implements MutationRecorder {
  readonly entries: LogEntry[] = [];

  recordDataset(csv: string, responseId: string): void {
    this.entries.push({ kind: "dataset", csv, responseId });
  }

  recordSession(body: SessionRequestBody, responseId: string): void {
    this.entries.push({ kind: "session", body: { ...body }, responseId });
  }

  toJSON(): string {
    return JSON.stringify({ version: 1, entries: this.entries }, null, 2);
  }

  static fromJSON(text: string): RequestLog {
    const parsed = JSON.parse(text) as { entries: LogEntry[] };
    const log = new RequestLog();
    for (const entry of parsed.entries) log.entries.push(entry);
    return log;
  }
}

/**
 * Re-execute a log against another server. Ids recorded at capture time
 * are rewritten to whatever the target server assigns (content-addressed
 * servers return the same ids, but the replay does not rely on that).
 * Sessions are polled to completion before dependents are posted, since
 * a child of an unfinished parent is rejected.
 *
 * Returns the mapping from recorded ids to replayed ids.
 */
export async function replay(
  base: string,
  log: RequestLog,
  fetchFn?: FetchLike,
): Promise<Map<string, string>> {
  const client = new Client(base, undefined, fetchFn);
  const idMap = new Map<string, string>();
  const translate = (id: string): string => idMap.get(id) ?? id;
  for (const entry of log.entries) {
    if (entry.kind === "dataset") {
      const info = await client.uploadDataset(entry.csv);
      idMap.set(entry.responseId, info.dataset_id);
      continue;
    }
    const body: SessionRequestBody = { ...entry.body };
    if (body.dataset_id !== undefined) {
      body.dataset_id = translate(body.dataset_id);
    }
    if (body.parent !== undefined) {
      body.parent = translate(body.parent);
    }
    const record = await client.createSession(body);
    await client.waitDone(record.session_id);
    idMap.set(entry.responseId, record.session_id);
  }
  return idMap;
}
