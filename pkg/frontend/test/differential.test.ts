/**
 * End-to-end differential against a real conductor server.
 *
 * A live server process is started once for the file. Fifty scripted
 * outcome sequences are entered through the console pipeline (Client +
 * ConsoleFlow + view model), and after every entry the trial is fetched
 * directly with plain fetch: the console's state must be byte-identical to
 * the direct responses, banner for banner and statistic for statistic.
 */

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiError, Client } from "../src/api.js";
import { ConsoleFlow } from "../src/flow.js";
import { rawAt, rawLeaves } from "../src/rawjson.js";
import { buildBanners } from "../src/viewmodel.js";

const TOKEN = "differential-secret";
const GRID = [140.0, 200.0, 250.0, 300.0, 350.0, 425.0];

function parametricConfig(seed: number) {
  return {
    q: 1 / 3,
    x_min: 140.0,
    x_max: 425.0,
    p0: 0.1,
    p1: 0.3,
    group_sizes: [4, 4],
    phase1: { design: "ewoc", m: 6 },
    thresholds: { b: 2.0, b_tilde: 2.0, c: 0.5 },
    seed,
  };
}

function gridConfig(seed: number) {
  return {
    ...parametricConfig(seed),
    analysis: "isotonic",
    grid: GRID,
    phase1: { design: "uniform_grid", m: 6, grid: GRID },
  };
}

// small deterministic PRNG so the 50 sequences are scripted, not random
function mulberry32(a: number): () => number {
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.listen(0, "127.0.0.1", () => {
      const addr = srv.address();
      if (addr === null || typeof addr === "string") {
        reject(new Error("no port"));
        return;
      }
      srv.close(() => resolve(addr.port));
    });
    srv.on("error", reject);
  });
}

let proc: ChildProcess;
let root: string;
let baseUrl: string;
let client: Client;

async function directGet(path: string): Promise<string> {
  const res = await fetch(baseUrl + path, {
    headers: { Authorization: `Bearer ${TOKEN}` },
  });
  expect(res.ok).toBe(true);
  return res.text();
}

beforeAll(async () => {
  const port = await freePort();
  root = mkdtempSync(join(tmpdir(), "conductor-"));
  baseUrl = `http://127.0.0.1:${port}`;
  proc = spawn(
    "python3",
    ["-m", "phase12.cli", "serve", "--root", root, "--host", "127.0.0.1",
     "--port", String(port), "--token", TOKEN],
    // stdout carries the access log; it must be drained or discarded, a
    // full pipe would block the server
    { stdio: ["ignore", "ignore", "pipe"] },
  );
  let stderr = "";
  proc.stderr?.on("data", (d) => (stderr += String(d)));
  const deadline = Date.now() + 60_000;
  for (;;) {
    if (proc.exitCode !== null) {
      throw new Error(`server exited early: ${stderr}`);
    }
    try {
      const res = await fetch(`${baseUrl}/health`);
      if (res.ok) break;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) throw new Error(`server never came up: ${stderr}`);
    await new Promise((r) => setTimeout(r, 250));
  }
  client = new Client({ baseUrl, token: TOKEN });
});

afterAll(() => {
  proc?.kill();
  if (root) rmSync(root, { recursive: true, force: true });
});

describe("console vs direct API", () => {
  it(
    "50 scripted sequences are byte-identical at every step",
    { timeout: 300_000 },
    async () => {
      let totalOutcomes = 0;
      for (let seq = 0; seq < 50; seq++) {
        const trialId = `seq-${seq}`;
        const config = seq % 2 === 0 ? parametricConfig(seq) : gridConfig(seq);
        await client.createTrial(config, trialId);
        const flow = new ConsoleFlow(client, trialId);
        await flow.refresh();

        const rand = mulberry32(1000 + seq);
        while (flow.vm!.pending !== null) {
          const tox = rand() < 0.15 ? 1 : 0;
          const eff = rand() < 0.5 ? 1 : 0;
          const res = await flow.submitOutcome(tox, eff);
          expect(res.ok).toBe(true);
          totalOutcomes++;

          const vm = flow.vm!;
          const directSnapText = await directGet(`/trials/${trialId}`);
          const directEventsText = await directGet(`/trials/${trialId}/events`);

          // whole-payload byte identity of what the console last read
          expect(flow.lastSnapshotText).toBe(directSnapText);
          expect(flow.lastEventsText).toBe(directEventsText);

          // every displayed statistic is the direct response's verbatim token
          const direct = rawLeaves(directSnapText);
          vm.analyses.forEach((row, i) => {
            expect(row.etaRaw).toBe(rawAt(direct, `analyses.${i}.eta_hat`));
            expect(row.l0Raw).toBe(rawAt(direct, `analyses.${i}.l0`));
            expect(row.l1Raw).toBe(rawAt(direct, `analyses.${i}.l1`));
            expect(row.pHatRaw).toBe(rawAt(direct, `analyses.${i}.p_hat`));
          });
          if (vm.pending !== null) {
            expect(vm.pending.doseRaw).toBe(rawAt(direct, "pending.dose"));
          }
          if (vm.etaHatRaw !== null) {
            expect(vm.etaHatRaw).toBe(rawAt(direct, "estimates.eta_hat"));
          }
          expect(vm.thresholds.bRaw).toBe(rawAt(direct, "thresholds.b"));

          // banners equal the ones a fresh read of the direct log yields
          const directEvents = JSON.parse(directEventsText).events;
          expect(vm.banners).toEqual(buildBanners(directEvents));
          expect(vm.version).toBe(JSON.parse(directSnapText).version);
        }

        // terminal state: a persistent banner and a disabled what-if panel
        const vm = flow.vm!;
        expect(vm.terminated).toBe(true);
        expect(vm.whatIfEnabled).toBe(false);
        expect(vm.banners.length).toBe(1);
        const directEvents = JSON.parse(await directGet(`/trials/${trialId}/events`)).events;
        expect(directEvents.filter((e: { kind: string }) => e.kind === "decision").length).toBe(1);

        // reload: a brand new console session reconstructs the same banner
        const reloaded = new ConsoleFlow(client, trialId);
        await reloaded.refresh();
        expect(reloaded.vm!.banners).toEqual(vm.banners);
      }
      expect(totalOutcomes).toBeGreaterThanOrEqual(50 * 10); // every trial reaches n >= 10
    },
  );

  it("duplicate double-click lands as a single event", async () => {
    await client.createTrial(parametricConfig(900), "dup");
    const snap = await client.snapshot("dup");
    const body = { patient_idx: 0, tox: 0, eff: 1, version: snap.data.version };
    const first = await client.postOutcome("dup", body);
    const second = await client.postOutcome("dup", body); // double click
    expect(second.text).toBe(first.text); // idempotent ack, byte-identical
    expect(second.data.events_count).toBe(first.data.events_count);
    expect(second.data.n_enrolled).toBe(1);
  });

  it("a contradictory resubmission is a version conflict the flow surfaces", async () => {
    await client.createTrial(parametricConfig(901), "conflict");
    const snap = await client.snapshot("conflict");
    await client.postOutcome("conflict", {
      patient_idx: 0,
      tox: 0,
      eff: 1,
      version: snap.data.version,
    });
    // a second coordinator screen still on the old version now submits
    const conflicts: string[] = [];
    const stale = new ConsoleFlow(client, "conflict", {
      onConflict: (m) => conflicts.push(m),
    });
    stale.vm = null;
    await stale.refresh();
    // regress its token to simulate the stale screen
    stale.vm!.version = snap.data.version;
    stale.vm!.pending = { patientIdx: 0, doseRaw: "211.25" };
    const res = await stale.submitOutcome(1, 0); // different values, same key
    expect(res.ok).toBe(false);
    expect(res.ok === false && res.conflict).toBe(true);
    expect(conflicts.length).toBe(1);
    // the refresh brought the real state back
    expect(stale.vm!.version).toBeGreaterThan(snap.data.version);
  });

  it("what-if: all-efficacious remainder never lowers the efficacy statistic", async () => {
    await client.createTrial(parametricConfig(902), "whatif");
    const flow = new ConsoleFlow(client, "whatif");
    await flow.refresh();
    // fixed script reaching the first interim with a CONTINUE verdict
    const script: [number, number][] = [
      [0, 0], [0, 1], [0, 0], [1, 0], [0, 0], [0, 1],
      [0, 0], [0, 1], [0, 0], [0, 0],
    ];
    for (const [tox, eff] of script) {
      const res = await flow.submitOutcome(tox, eff);
      expect(res.ok).toBe(true);
    }
    const vm = flow.vm!;
    expect(vm.phase).toBe("phase2");
    expect(vm.analyses.length).toBe(1);
    const current = Number(vm.analyses[0]!.l0Raw);
    const proj = await flow.whatIf([
      { tox: 0, eff: 1 }, { tox: 0, eff: 1 }, { tox: 0, eff: 1 }, { tox: 0, eff: 1 },
    ]);
    expect(proj).not.toBeNull();
    const rows = proj!.data.analyses;
    expect(rows.length).toBeGreaterThan(0);
    expect(rows[rows.length - 1]!.l0).toBeGreaterThanOrEqual(current);
    // projection is read-only: the trial did not move
    const after = await client.snapshot("whatif");
    expect(after.text).toBe(flow.lastSnapshotText);
  });

  it("empty what-if stays local and the server rejects an empty projection", async () => {
    const flow = new ConsoleFlow(client, "whatif");
    await flow.refresh();
    expect(await flow.whatIf([])).toBeNull();
    await expect(client.project("whatif", [])).rejects.toMatchObject({
      code: "invalid_config",
      field: "outcomes",
    });
  });

  it("projecting a terminated trial is refused", async () => {
    await client.createTrial(parametricConfig(903), "term-proj");
    const flow = new ConsoleFlow(client, "term-proj");
    await flow.refresh();
    const rand = mulberry32(42);
    while (flow.vm!.pending !== null) {
      const res = await flow.submitOutcome(0, rand() < 0.9 ? 1 : 0);
      expect(res.ok).toBe(true);
    }
    expect(flow.vm!.whatIfEnabled).toBe(false);
    await expect(client.project("term-proj", [{ tox: 0, eff: 1 }])).rejects.toMatchObject(
      { code: "already_terminated" },
    );
  });

  it("bad token is refused with a structured error", async () => {
    const bad = new Client({ baseUrl, token: "wrong" });
    await expect(bad.listTrials()).rejects.toSatisfy(
      (e: unknown) => e instanceof ApiError && e.status === 401 && e.code === "unauthorized",
    );
  });
});
