/**
 * Live-server scaffolding for the suites: boots the clustering service
 * in a subprocess on a free port, and produces CSV fixtures with the
 * same generator the service's own test data comes from.
 */

import { ChildProcess, execFile, spawn } from "node:child_process";
import { mkdtempSync } from "node:fs";
import net from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";

const execFileAsync = promisify(execFile);

export interface LiveServer {
  base: string;
  stop: () => void;
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = net.createServer();
    probe.once("error", reject);
    probe.listen(0, "127.0.0.1", () => {
      const address = probe.address();
      if (address === null || typeof address === "string") {
        probe.close();
        reject(new Error("no port assigned"));
        return;
      }
      probe.close(() => resolve(address.port));
    });
  });
}

async function waitReachable(base: string, proc: ChildProcess): Promise<void> {
  const deadline = Date.now() + 30_000;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    if (proc.exitCode !== null) {
      throw new Error(`server exited early with code ${proc.exitCode}`);
    }
    try {
      await fetch(`${base}/v1/datasets/none`);
      return; // any HTTP answer means uvicorn is up
    } catch (err) {
      lastError = err;
      await new Promise((r) => setTimeout(r, 150));
    }
  }
  throw new Error(`server never came up at ${base}: ${lastError}`);
}

export async function startServer(workers = 2): Promise<LiveServer> {
  const port = await freePort();
  const store = mkdtempSync(join(tmpdir(), "explorer-store-"));
  const proc = spawn(
    "python3",
    [
      "-m",
      "urfcluster.cli",
      "serve",
      "--store",
      store,
      "--host",
      "127.0.0.1",
      "--port",
      String(port),
      "--workers",
      String(workers),
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  let stderr = "";
  proc.stderr?.on("data", (chunk: Buffer) => {
    stderr += chunk.toString();
  });
  const base = `http://127.0.0.1:${port}`;
  try {
    await waitReachable(base, proc);
  } catch (err) {
    proc.kill();
    throw new Error(`${err}\nserver stderr:\n${stderr}`);
  }
  return {
    base,
    stop: () => {
      proc.kill();
    },
  };
}

/** Labeled synthetic scenario CSV straight from the Python generator. */
export async function syntheticCsv(
  counts: [number, number, number],
  seed: number,
): Promise<string> {
  const script =
    "import sys; from urfcluster.dataset import generate_synthetic, to_csv_text; " +
    `sys.stdout.write(to_csv_text(generate_synthetic(count_per_template=(${counts.join(
      ",",
    )}), seed=${seed})))`;
  const { stdout } = await execFileAsync("python3", ["-c", script], {
    maxBuffer: 64 * 1024 * 1024,
  });
  return stdout;
}

/** Width in pixels from a PNG's IHDR chunk. */
export function pngWidth(bytes: ArrayBuffer): number {
  return new DataView(bytes).getUint32(16, false);
}

/** Height in pixels from a PNG's IHDR chunk. */
export function pngHeight(bytes: ArrayBuffer): number {
  return new DataView(bytes).getUint32(20, false);
}
