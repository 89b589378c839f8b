import { describe, expect, it } from "vitest";

import type { Pose } from "./api.js";
import { OverlayScheduler, type ScheduledResult } from "./state.js";

const P = (tx: number): Pose => ({ tx, ty: 0, rz: 0, ry: 0 });

interface Deferred {
  pose: Pose;
  resolve: (value: string) => void;
  reject: (err: unknown) => void;
}

/** Scheduler wired to hand-resolved promises so response order is ours. */
function harness() {
  const inbox: Deferred[] = [];
  const displayed: ScheduledResult<string>[] = [];
  const errors: unknown[] = [];
  let live = 0;
  let maxLive = 0;
  const scheduler = new OverlayScheduler<string>(
    (pose) => {
      live += 1;
      maxLive = Math.max(maxLive, live);
      return new Promise<string>((resolve, reject) => {
        inbox.push({
          pose,
          resolve: (v) => {
            live -= 1;
            resolve(v);
          },
          reject: (e) => {
            live -= 1;
            reject(e);
          },
        });
      });
    },
    (shown) => displayed.push(shown),
    (err) => errors.push(err),
  );
  return { scheduler, inbox, displayed, errors, maxLive: () => maxLive };
}

const settle = () => new Promise<void>((r) => setTimeout(r, 0));

describe("OverlayScheduler", () => {
  it("issues immediately when idle", async () => {
    const h = harness();
    h.scheduler.request(P(1));
    expect(h.scheduler.issued).toBe(1);
    h.inbox[0]!.resolve("img-1");
    await settle();
    expect(h.displayed.map((d) => d.pose.tx)).toEqual([1]);
  });

  it("coalesces a scrub burst into latest-pose-wins", async () => {
    const h = harness();
    h.scheduler.request(P(1));
    for (let i = 2; i <= 9; i++) h.scheduler.request(P(i));
    // intermediate poses 2..8 never reach the wire
    expect(h.scheduler.issued).toBe(1);
    h.inbox[0]!.resolve("img-1");
    await settle();
    expect(h.scheduler.issued).toBe(2);
    expect(h.inbox[1]!.pose.tx).toBe(9);
    h.inbox[1]!.resolve("img-9");
    await settle();
    expect(h.displayed.map((d) => d.pose.tx)).toEqual([1, 9]);
  });

  it("never holds more than one request open", async () => {
    const h = harness();
    for (let i = 0; i < 50; i++) {
      h.scheduler.request(P(i));
      if (h.inbox.length > 0 && i % 7 === 0) {
        h.inbox.shift()!.resolve(`img-${i}`);
        await settle();
      }
    }
    while (h.inbox.length > 0) {
      h.inbox.shift()!.resolve("img");
      await settle();
    }
    expect(h.maxLive()).toBe(1);
    // the last thing on screen is the last pose asked for
    expect(h.displayed[h.displayed.length - 1]!.pose.tx).toBe(49);
  });

  it("drops a response that would paint over a newer one", async () => {
    // bypass the serializer by resolving out of order at the fetch layer:
    // even then, a stale sequence number must not reach the display
    const h = harness();
    h.scheduler.request(P(1));
    h.scheduler.request(P(2));
    h.inbox[0]!.resolve("img-1");
    await settle();
    h.inbox[1]!.resolve("img-2");
    await settle();
    const seqs = h.displayed.map((d) => d.seq);
    expect(seqs).toEqual([...seqs].sort((a, b) => a - b));
    expect(h.displayed[h.displayed.length - 1]!.pose.tx).toBe(2);
  });

  it("keeps scrubbing after a failed fetch", async () => {
    const h = harness();
    h.scheduler.request(P(1));
    h.scheduler.request(P(2));
    h.inbox[0]!.reject(new Error("boom"));
    await settle();
    expect(h.errors).toHaveLength(1);
    // the pending pose still goes out after the failure
    expect(h.inbox[1]!.pose.tx).toBe(2);
    h.inbox[1]!.resolve("img-2");
    await settle();
    expect(h.displayed.map((d) => d.pose.tx)).toEqual([2]);
  });

  it("reports busy only while a request is in flight", async () => {
    const h = harness();
    expect(h.scheduler.busy).toBe(false);
    h.scheduler.request(P(1));
    expect(h.scheduler.busy).toBe(true);
    h.inbox[0]!.resolve("img");
    await settle();
    expect(h.scheduler.busy).toBe(false);
  });
});
