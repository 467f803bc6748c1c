// End-to-end review flow against a real `fpclassify serve` process:
// queue -> evidence render -> three decisions through the same handler the
// buttons call -> final progress, with a mid-flow "page reload" (a second
// app instance rebuilt purely from server state).

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { createHash } from "node:crypto";
import { mkdtempSync, mkdirSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { withPrivacyChecked } from "../src/model.js";
import { ReviewApp } from "../src/main.js";

const PYTHON = process.env.FPCLASSIFY_PYTHON ?? "python3";
const REPO_ROOT = resolve(__dirname, "..", "..");

class FakePanel {
  innerHTML = "";
  style: Record<string, string> = {};
  addEventListener(): void {}
}

function fakeRoot() {
  return {
    banner: new FakePanel() as unknown as HTMLElement,
    pending: new FakePanel() as unknown as HTMLElement,
    sidebar: new FakePanel() as unknown as HTMLElement,
    drilldown: new FakePanel() as unknown as HTMLElement,
  };
}

function sha256(text: string): string {
  return createHash("sha256").update(text).digest("hex");
}

function writeCorpus(dir: string): void {
  const traces = join(dir, "traces");
  mkdirSync(traces, { recursive: true });
  const scripts: Array<[string, string[]]> = [
    ["f1", ["A", "B", "C"]],
    ["f2", ["C", "D"]],
    ["s1", ["A", "B", "C"]],
    ["s2", ["A", "B"]],
    ["s3", ["E"]],
    ["s4", ["C", "D", "E"]],
  ];
  for (const [sid, keys] of scripts) {
    writeFileSync(
      join(traces, `${sid}.json`),
      JSON.stringify({
        script_id: sid,
        source_url: `https://scripts.example/${sid}.js`,
        content_hash: sha256(sid),
        events: keys.map((k) => ({ api: k, args: [], count: 1 })),
      }),
    );
  }
  writeFileSync(join(dir, "ground_truth.json"), JSON.stringify(["f1", "f2"]));
}

async function waitFor<T>(
  probe: () => T | null | undefined | false,
  what: string,
  timeoutMs = 20000,
): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const value = probe();
    if (value) return value;
    if (Date.now() > deadline) throw new Error(`timed out waiting for ${what}`);
    await new Promise((r) => setTimeout(r, 50));
  }
}

describe("review flow against a live server", () => {
  let server: ChildProcess;
  let baseUrl: string;
  let workDir: string;
  let serverExit: Promise<number | null>;

  beforeAll(async () => {
    workDir = mkdtempSync(join(tmpdir(), "fpclassify-e2e-"));
    writeCorpus(workDir);

    const ingest = spawnSync(
      PYTHON,
      [
        "-m", "fpclassify.cli", "ingest",
        "--traces", join(workDir, "traces"),
        "--out", join(workDir, "corpus.json"),
      ],
      { cwd: REPO_ROOT, encoding: "utf-8" },
    );
    expect(ingest.status, ingest.stderr).toBe(0);

    const port = 20000 + Math.floor(Math.random() * 20000);
    baseUrl = `http://127.0.0.1:${port}`;
    server = spawn(
      PYTHON,
      [
        "-m", "fpclassify.cli", "serve",
        "--corpus", join(workDir, "corpus.json"),
        "--ground-truth", join(workDir, "ground_truth.json"),
        "--state", join(workDir, "state.json"),
        "--port", String(port),
      ],
      { cwd: REPO_ROOT, stdio: ["ignore", "pipe", "pipe"] },
    );
    serverExit = new Promise((resolveExit) => server.on("exit", resolveExit));

    const client = new ApiClient(baseUrl);
    const deadline = Date.now() + 30000;
    for (;;) {
      try {
        await client.progress();
        break;
      } catch {
        if (Date.now() > deadline) throw new Error("server never became ready");
        await new Promise((r) => setTimeout(r, 100));
      }
    }
  }, 60000);

  afterAll(async () => {
    if (server && server.exitCode === null) {
      server.kill("SIGTERM");
      await serverExit;
    }
  });

  it("drives the full queue to a finished partition, surviving a reload", async () => {
    const panels = fakeRoot();
    const app = new ReviewApp(new ApiClient(baseUrl), panels);
    app.start();

    // s2 is the first script the automatic rules cannot decide.
    await waitFor(() => app.state.pending?.script_id === "s2", "s2 to become pending");
    await waitFor(() => app.state.pendingDetail, "s2 detail");

    const html = (panels.pending as unknown as FakePanel).innerHTML;
    expect(html).toContain("s2");
    expect(html).toContain("2/3");           // similarity score
    expect(html).toContain("f1");            // matched fingerprinter
    expect(html).toContain("All attributes (2)");
    expect(html).toContain('data-action="label"');

    await app.submit("non-fingerprinter");

    // Simulated page reload: a brand-new app instance rebuilt from the
    // server alone must see the s2 decision and the next pending item.
    app.stop();
    const reloaded = new ReviewApp(new ApiClient(baseUrl), fakeRoot());
    reloaded.start();
    await waitFor(() => reloaded.state.pending?.script_id === "s4", "s4 after reload");
    await waitFor(
      () => reloaded.state.history.some((e) => e.script_id === "s2"),
      "s2 decision in reloaded history",
    );
    expect(
      reloaded.state.history.find((e) => e.script_id === "s2")?.label,
    ).toBe("non-fingerprinter");
    await waitFor(() => reloaded.state.progress, "mid-flow progress");
    const mid = reloaded.state.progress!;
    expect(mid.suspects + mid.cleans + mid.unknowns + mid.unlabeled).toBe(mid.total);

    // Tick the privacy checkbox for s4 (as the change handler would), then
    // decide through the same path the buttons use.
    reloaded.state = withPrivacyChecked(reloaded.state, "s4", true);
    await reloaded.submit("fingerprinter");

    await waitFor(() => reloaded.state.pending?.script_id === "s3", "s3 pending");
    await reloaded.submit("unknown");

    await waitFor(() => reloaded.state.finished, "session to finish");
    const progress = await new ApiClient(baseUrl).progress();
    expect(progress.unlabeled).toBe(0);
    expect(progress.total).toBe(4);
    expect(progress.suspects).toBe(2);
    expect(progress.cleans).toBe(1);
    expect(progress.unknowns).toBe(1);
    expect(progress.manual_decisions).toBe(3);
    expect(progress.suspects + progress.cleans + progress.unknowns + progress.unlabeled).toBe(
      progress.total,
    );

    // The privacy flag made it into the stored evidence bundle.
    const detail = await new ApiClient(baseUrl).script("s4");
    expect(detail.evidence?.privacy_policy_checked).toBe(true);
    expect(detail.label).toBe("fingerprinter");

    reloaded.stop();
  }, 60000);

  it("rejects a stale submission gracefully", async () => {
    // The session is finished; a direct submit must 409 without crashing.
    const client = new ApiClient(baseUrl);
    const result = await client.submitLabel("s2", "unknown", false);
    expect(result.ok).toBe(false);
    expect(result.status).toBe(409);
  });
});
