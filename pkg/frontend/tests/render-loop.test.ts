import { describe, expect, it } from "vitest";

import { RenderScheduler } from "../src/render-loop.js";
import type { RenderParams } from "../src/types.js";

function params(azimuth: number): RenderParams {
  return { azimuth, elevation: 20, mode: "relight", rig: "default" };
}

interface Deferred {
  promise: Promise<void>;
  resolve: () => void;
  reject: (error: Error) => void;
}

function deferred(): Deferred {
  let resolve!: () => void;
  let reject!: (error: Error) => void;
  const promise = new Promise<void>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

function trackedScheduler() {
  const served: number[] = [];
  const gates: Deferred[] = [];
  const scheduler = new RenderScheduler(async (p) => {
    served.push(p.azimuth);
    const gate = deferred();
    gates.push(gate);
    await gate.promise;
  });
  return { scheduler, served, gates };
}

const tick = () => new Promise<void>((resolve) => setTimeout(resolve, 0));

describe("RenderScheduler", () => {
  it("serves an idle request immediately", async () => {
    const { scheduler, served, gates } = trackedScheduler();
    scheduler.request(params(10));
    expect(served).toEqual([10]);
    expect(scheduler.busy).toBe(true);
    gates[0]?.resolve();
    await tick();
    expect(scheduler.busy).toBe(false);
  });

  it("keeps at most one request in flight and drops stale ones", async () => {
    const { scheduler, served, gates } = trackedScheduler();
    scheduler.request(params(10));
    scheduler.request(params(20)); // scrubbing…
    scheduler.request(params(30));
    scheduler.request(params(40)); // …ends here
    expect(served).toEqual([10]); // only the first went out
    gates[0]?.resolve();
    await tick();
    // the final value rendered next; 20 and 30 never hit the network
    expect(served).toEqual([10, 40]);
    gates[1]?.resolve();
    await tick();
    expect(served).toEqual([10, 40]);
    expect(scheduler.busy).toBe(false);
  });

  it("continues the chain after a failed frame", async () => {
    const { scheduler, served, gates } = trackedScheduler();
    scheduler.request(params(10));
    scheduler.request(params(50));
    gates[0]?.reject(new Error("boom"));
    await tick();
    expect(served).toEqual([10, 50]);
    gates[1]?.resolve();
    await tick();
    expect(scheduler.busy).toBe(false);
  });

  it("accepts new requests once idle again", async () => {
    const { scheduler, served, gates } = trackedScheduler();
    scheduler.request(params(10));
    gates[0]?.resolve();
    await tick();
    scheduler.request(params(99));
    expect(served).toEqual([10, 99]);
    gates[1]?.resolve();
    await tick();
  });
});
