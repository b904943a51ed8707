/**
 * Scripted curation session against the real review-service:
 * accept 10, reject 5, export returns exactly the accepted pairs, and a
 * server restart preserves every verdict.
 */

import { type ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ReviewApi } from "../src/api.js";
import { QueueController } from "../src/queue.js";

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;
const PYTHON = process.env.PYTHON ?? "python3";

let workDir: string;
let server: ChildProcess | null = null;

function writeFixture(dir: string, nItems: number): string {
  const lines: string[] = [];
  for (let k = 0; k < nItems; k++) {
    lines.push(
      JSON.stringify({
        pair_id: `car/${String(k).padStart(2, "0")}`,
        image_path: `tile_${k}.png`,
        caption: `a small car number ${k}`,
        boxes: [[1, 1, 20, 20]],
        category: "car",
        source: "alpha",
        width: 64,
        height: 64,
      }),
    );
  }
  const path = join(dir, "review_candidates.jsonl");
  writeFileSync(path, lines.join("\n") + "\n");
  return path;
}

async function waitForHealth(timeoutMs = 15000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/healthz`);
      if (resp.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 150));
  }
  throw new Error("review-service did not become healthy");
}

function startServer(dataDir: string, logPath: string): ChildProcess {
  const child = spawn(
    PYTHON,
    ["-m", "w2s.cli", "serve-review", "--data", dataDir, "--log", logPath,
     "--port", String(PORT)],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  child.stderr?.on("data", (chunk: Buffer) => {
    const text = chunk.toString();
    if (text.includes("Traceback")) console.error(text);
  });
  return child;
}

async function stopServer(child: ChildProcess | null): Promise<void> {
  if (!child) return;
  child.kill("SIGTERM");
  await new Promise<void>((resolve) => {
    const force = setTimeout(() => {
      child.kill("SIGKILL");
      resolve();
    }, 4000);
    child.once("exit", () => {
      clearTimeout(force);
      resolve();
    });
  });
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "review-ui-"));
  writeFixture(workDir, 18);
  server = startServer(workDir, join(workDir, "verdicts.log"));
  await waitForHealth();
}, 30000);

afterAll(async () => {
  await stopServer(server);
});

describe("scripted curation session", () => {
  it("accepts 10, rejects 5, exports exactly the accepted pairs, survives restart", async () => {
    const api = new ReviewApi(BASE);
    const queue = new QueueController(api);
    queue.reviewer = "expert-1";
    await queue.selectCategory("car");
    expect(queue.remaining).toBe(18);

    const accepted: string[] = [];
    const rejected: string[] = [];
    for (let k = 0; k < 15; k++) {
      const current = queue.current;
      expect(current).not.toBeNull();
      if (k < 10) {
        accepted.push(current!.pair_id);
        expect(await queue.submit("accepted")).toBe(true);
      } else {
        rejected.push(current!.pair_id);
        expect(await queue.submit("rejected", "does not match")).toBe(true);
      }
    }
    expect(queue.verdictsIssued).toBe(15);
    expect(queue.remaining).toBe(3);

    const exported = await api.exportTestSet(100);
    expect(exported.map((s) => s.id).sort()).toEqual([...accepted].sort());
    expect(exported).toHaveLength(10);
    for (const sample of exported) {
      expect(sample.splits).toEqual(["Test"]);
    }

    // restart the service on the same log: every verdict must survive
    await stopServer(server);
    server = startServer(workDir, join(workDir, "verdicts.log"));
    await waitForHealth();

    const after = new ReviewApi(BASE);
    const categories = await after.categories();
    const car = categories.find((c) => c.category === "car");
    expect(car).toMatchObject({ accepted: 10, rejected: 5, pending: 3 });

    const exportedAgain = await after.exportTestSet(100);
    expect(exportedAgain.map((s) => s.id).sort()).toEqual([...accepted].sort());

    let page = await after.items("car", "", 100);
    const statuses = new Map(page.items.map((i) => [i.pair_id, i.status]));
    for (const id of accepted) expect(statuses.get(id)).toBe("accepted");
    for (const id of rejected) expect(statuses.get(id)).toBe("rejected");
  }, 60000);
});
