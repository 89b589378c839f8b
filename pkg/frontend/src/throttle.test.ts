import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { OVERLAY_MIN_INTERVAL_MS, throttle } from "./throttle.js";

describe("throttle", () => {
  beforeEach(() => vi.useFakeTimers({ toFake: ["setTimeout", "clearTimeout", "Date"] }));
  afterEach(() => vi.useRealTimers());

  it("fires an isolated call immediately", () => {
    const fn = vi.fn();
    const throttled = throttle(fn, 100);
    throttled("a");
    expect(fn.mock.calls).toEqual([["a"]]);
  });

  it("coalesces a burst to leading plus trailing with the newest args", () => {
    const calls: number[] = [];
    const throttled = throttle((v: number) => calls.push(v), 100);
    throttled(1);
    vi.advanceTimersByTime(10);
    throttled(2);
    vi.advanceTimersByTime(10);
    throttled(3);
    expect(calls).toEqual([1]);
    vi.advanceTimersByTime(100);
    expect(calls).toEqual([1, 3]);
  });

  it("keeps firing during a continuous stream, once per interval", () => {
    const calls: number[] = [];
    const throttled = throttle((v: number) => calls.push(v), OVERLAY_MIN_INTERVAL_MS);
    // 2 s scrub at 50 ms per event: live feedback, not silence until release
    for (let t = 0; t < 2000; t += 50) {
      throttled(t);
      vi.advanceTimersByTime(50);
    }
    expect(calls.length).toBeGreaterThanOrEqual(10);
    expect(calls[0]).toBe(0);
    vi.advanceTimersByTime(OVERLAY_MIN_INTERVAL_MS);
    expect(calls[calls.length - 1]).toBe(1950);
  });

  it("never exceeds one call per interval", () => {
    const stamps: number[] = [];
    const throttled = throttle(() => stamps.push(Date.now()), OVERLAY_MIN_INTERVAL_MS);
    // 4 ms event spacing, far faster than the cap
    for (let t = 0; t < 1000; t += 4) {
      throttled();
      vi.advanceTimersByTime(4);
    }
    vi.advanceTimersByTime(OVERLAY_MIN_INTERVAL_MS);
    for (let i = 1; i < stamps.length; i++) {
      expect(stamps[i]! - stamps[i - 1]!).toBeGreaterThanOrEqual(OVERLAY_MIN_INTERVAL_MS);
    }
    expect(stamps.length).toBeLessThanOrEqual(1000 / OVERLAY_MIN_INTERVAL_MS + 1);
  });

  it("treats calls spaced wider than the interval as all leading", () => {
    const fn = vi.fn();
    const throttled = throttle(fn, 100);
    throttled("a");
    vi.advanceTimersByTime(150);
    throttled("b");
    vi.advanceTimersByTime(150);
    expect(fn.mock.calls).toEqual([["a"], ["b"]]);
  });

  it("cancel drops the queued trailing call", () => {
    const fn = vi.fn();
    const throttled = throttle(fn, 100);
    throttled(1);
    throttled(2);
    throttled.cancel();
    vi.advanceTimersByTime(500);
    expect(fn.mock.calls).toEqual([[1]]);
  });

  it("cancel is safe with nothing queued", () => {
    const throttled = throttle(() => {}, 100);
    expect(() => throttled.cancel()).not.toThrow();
  });
});
