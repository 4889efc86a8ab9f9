/** End-to-end checks against a real service process.
 *
 * The fixture server hosts one style checkpoint; the suite drives the
 * same explorer core the browser uses through a real HTTP transport.
 */

import { spawn, ChildProcess } from "node:child_process";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { CheckpointInfo, HttpTransport, listCheckpoints } from "../src/api.js";
import { Explorer } from "../src/explorer.js";
import { ManualClock } from "../src/scheduler.js";
import { payloadHash, sliceUrl } from "../src/slices.js";

const PORT = 8917;
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
let transport: HttpTransport;
let checkpoint: CheckpointInfo;

async function waitForService(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const resp = await fetch(`${BASE}/checkpoints`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) throw new Error("service did not come up");
    await new Promise((r) => setTimeout(r, 500));
  }
}

beforeAll(async () => {
  const here = dirname(fileURLToPath(import.meta.url));
  server = spawn("python3", [join(here, "fixture_server.py"), String(PORT)], {
    stdio: ["ignore", "inherit", "inherit"],
  });
  await waitForService(180_000);
  transport = new HttpTransport(BASE);
  const listed = (await transport.send(listCheckpoints())) as { checkpoints: CheckpointInfo[] };
  checkpoint = listed.checkpoints.find((c) => c.arch === "stylegan")!;
  expect(checkpoint).toBeDefined();
}, 200_000);

afterAll(() => {
  server?.kill();
});

async function generateAtPsiZero(seed: number) {
  const clock = new ManualClock();
  const explorer = new Explorer(transport, clock);
  explorer.dispatch({ t: 0, kind: "checkpoint", info: checkpoint });
  explorer.dispatch({ t: 10, kind: "seed", value: seed });
  explorer.dispatch({ t: 20, kind: "slider", name: "psi", value: 0 });
  await clock.advanceTo(1000);
  await explorer.idle();
  expect(explorer.errors.generate).toBeUndefined();
  const resp = explorer.responses.generate!;
  expect(resp.code_space).toBe("w");
  return resp;
}

describe("live service", () => {
  it("renders a psi-zero preview whose payload hash ignores the seed", async () => {
    const first = await generateAtPsiZero(1);
    const second = await generateAtPsiZero(99);
    const idA = first.volumes[0]!.id;
    const idB = second.volumes[0]!.id;
    expect(idA).toBe(idB); // fully truncated samples collapse to the mean

    const volumeHashes = await Promise.all([
      transport.bytes(`/volume/${idA}`).then(payloadHash),
      transport.bytes(`/volume/${idB}`).then(payloadHash),
    ]);
    expect(volumeHashes[0]).toBe(volumeHashes[1]);

    const center = Math.floor(checkpoint.full_shape[0] / 2);
    const sliceHashes = await Promise.all([
      transport.bytes(sliceUrl(idA, 0, center)).then(payloadHash),
      transport.bytes(sliceUrl(idB, 0, center)).then(payloadHash),
    ]);
    expect(sliceHashes[0]).toBe(sliceHashes[1]);
  }, 120_000);

  it("varies the preview when psi is nonzero", async () => {
    const clock = new ManualClock();
    const explorer = new Explorer(transport, clock);
    explorer.dispatch({ t: 0, kind: "checkpoint", info: checkpoint });
    explorer.dispatch({ t: 10, kind: "seed", value: 1 });
    explorer.dispatch({ t: 20, kind: "slider", name: "psi", value: 1 });
    await clock.advanceTo(1000);
    await explorer.idle();
    const a = explorer.responses.generate!.volumes[0]!.id;
    explorer.dispatch({ t: 2000, kind: "seed", value: 99 });
    await clock.advanceTo(3000);
    await explorer.idle();
    const b = explorer.responses.generate!.volumes[0]!.id;
    expect(a).not.toBe(b);
  }, 120_000);

  it("issues /mix through the preset path and gets a stored volume back", async () => {
    const clock = new ManualClock();
    const explorer = new Explorer(transport, clock);
    explorer.dispatch({ t: 0, kind: "checkpoint", info: checkpoint });
    explorer.dispatch({ t: 10, kind: "slider", name: "psi", value: 0.8 });
    await clock.advanceTo(1000);
    await explorer.idle();
    explorer.dispatch({ t: 1100, kind: "adopt", role: "source" });
    explorer.dispatch({ t: 1200, kind: "seed", value: 5 });
    await clock.advanceTo(2000);
    await explorer.idle();
    explorer.dispatch({ t: 2100, kind: "adopt", role: "target" });
    explorer.dispatch({ t: 2200, kind: "preset", boundary: 12 });
    await clock.advanceTo(3000);
    await explorer.idle();
    expect(explorer.errors.mix).toBeUndefined();
    const mixed = explorer.responses.mix!;
    expect(mixed.boundary).toBe(12);
    const bytes = await transport.bytes(`/volume/${mixed.id}`);
    expect(bytes.length).toBeGreaterThan(0);
  }, 120_000);
});
