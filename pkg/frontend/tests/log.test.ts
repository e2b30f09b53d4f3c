/** Request log capture and replay against a mocked server. */

import { describe, expect, it } from "vitest";

import { Client, FetchLike, SessionRequestBody } from "../src/api.js";
import { RequestLog, replay } from "../src/log.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

/**
 * Minimal fake service: hands out its own ids (prefixed "b-") so the
 * replay has to thread returned ids into dependent requests instead of
 * trusting the recorded ones.
 */
function fakeServer() {
  const posted: { path: string; body: unknown }[] = [];
  let sessionCount = 0;
  const fetchFn: FetchLike = async (input, init) => {
    const url = new URL(input);
    const path = url.pathname;
    if (init?.method === "POST" && path === "/v1/datasets") {
      posted.push({ path, body: init.body });
      return jsonResponse(
        {
          dataset_id: "b-data",
          m: 4,
          q: 2,
          has_labels: false,
          created: true,
        },
        201,
      );
    }
    if (init?.method === "POST" && path === "/v1/sessions") {
      const body = JSON.parse(String(init.body)) as SessionRequestBody;
      posted.push({ path, body });
      sessionCount += 1;
      return jsonResponse(
        {
          session_id: `b-s${sessionCount}`,
          status: "queued",
          dataset_id: "b-data",
          config: {},
          parent: null,
          error: null,
          created: true,
        },
        202,
      );
    }
    if (path.startsWith("/v1/sessions/")) {
      return jsonResponse({
        session_id: path.split("/")[3],
        status: "done",
        dataset_id: "b-data",
        config: {},
        parent: null,
        error: null,
        created: false,
      });
    }
    return jsonResponse({ error: "not-found" }, 404);
  };
  return { fetchFn, posted };
}

describe("request log", () => {
  it("records mutations in order and survives a JSON round-trip", async () => {
    const log = new RequestLog();
    const recorder = fakeServer();
    const client = new Client("http://a", log, recorder.fetchFn);
    await client.uploadDataset("x,y\n1,2\n");
    await client.createSession({ dataset_id: "b-data", i_min: 0.29 });
    expect(log.entries.map((e) => e.kind)).toEqual(["dataset", "session"]);
    const revived = RequestLog.fromJSON(log.toJSON());
    expect(revived.entries).toEqual(log.entries);
  });

  it("reads are not part of the log", async () => {
    const log = new RequestLog();
    const server = fakeServer();
    const client = new Client("http://a", log, server.fetchFn);
    await client.getSession("b-s1");
    expect(log.entries).toHaveLength(0);
  });

  it("replay rewrites recorded ids to the target server's ids", async () => {
    // Captured on server "a": dataset a-data, root a-root, child of a-root.
    const log = new RequestLog();
    log.recordDataset("x,y\n1,2\n2,3\n", "a-data");
    log.recordSession({ dataset_id: "a-data", i_min: 0.29 }, "a-root");
    log.recordSession(
      { parent: "a-root", range: [0, 2], i_min: 0.34 },
      "a-child",
    );

    const target = fakeServer();
    const idMap = await replay("http://b", log, target.fetchFn);
    expect(idMap.get("a-data")).toBe("b-data");
    expect(idMap.get("a-root")).toBe("b-s1");
    expect(idMap.get("a-child")).toBe("b-s2");

    const sessionBodies = target.posted
      .filter((p) => p.path === "/v1/sessions")
      .map((p) => p.body as SessionRequestBody);
    expect(sessionBodies[0]?.dataset_id).toBe("b-data");
    expect(sessionBodies[1]?.parent).toBe("b-s1");
    expect(sessionBodies[1]?.range).toEqual([0, 2]);
  });
});
