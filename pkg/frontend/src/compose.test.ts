import { describe, expect, it } from "vitest";

import { decodeOverlay, recompose, SERVER_TINT } from "./compose.js";

/** Build the RGBA the service would send for one masked + one plain pixel. */
function fusedPair(dsaMasked: number, dsaPlain: number): Uint8ClampedArray {
  const rgba = new Uint8ClampedArray(8);
  // under the mask: R saturates, G = B = dsa * (1 - tint)
  rgba[0] = 255;
  rgba[1] = rgba[2] = Math.round(dsaMasked * (1 - SERVER_TINT));
  rgba[3] = 255;
  // off the mask: plain gray
  rgba[4] = rgba[5] = rgba[6] = dsaPlain;
  rgba[7] = 255;
  return rgba;
}

describe("decodeOverlay", () => {
  it("recovers mask and DSA gray from the fused image", () => {
    const rgba = fusedPair(200, 140);
    const decoded = decodeOverlay(rgba, 2, 1);
    expect(Array.from(decoded.mask)).toEqual([1, 0]);
    expect(decoded.gray[0]).toBeCloseTo(200 / 255, 2);
    expect(decoded.gray[1]).toBeCloseTo(140 / 255, 6);
  });

  it("treats equal channels as background even at full white", () => {
    const rgba = new Uint8ClampedArray([255, 255, 255, 255]);
    const decoded = decodeOverlay(rgba, 1, 1);
    expect(decoded.mask[0]).toBe(0);
    expect(decoded.gray[0]).toBe(1);
  });

  it("clips recovered gray at 1 when the tinted value rounds high", () => {
    // G = 130 would invert to 260/255 > 1
    const rgba = new Uint8ClampedArray([255, 130, 130, 255]);
    const decoded = decodeOverlay(rgba, 1, 1);
    expect(decoded.gray[0]).toBe(1);
  });

  it("rejects a buffer that does not match the dimensions", () => {
    expect(() => decodeOverlay(new Uint8ClampedArray(12), 2, 2)).toThrow(/length/);
  });
});

describe("recompose", () => {
  it("alpha 0 strips the tint and shows plain DSA everywhere", () => {
    const decoded = decodeOverlay(fusedPair(200, 140), 2, 1);
    const out = recompose(decoded, 0);
    // masked pixel decoded to 200/255 within rounding
    expect(Math.abs(out[0]! - 200)).toBeLessThanOrEqual(1);
    expect(out[0]).toBe(out[1]);
    expect(out[1]).toBe(out[2]);
    expect([out[4], out[5], out[6]]).toEqual([140, 140, 140]);
    expect(out[3]).toBe(255);
  });

  it("alpha at the server tint reproduces the fetched image", () => {
    const rgba = fusedPair(200, 140);
    const out = recompose(decodeOverlay(rgba, 2, 1), SERVER_TINT);
    for (let i = 0; i < rgba.length; i++) {
      expect(Math.abs(out[i]! - rgba[i]!)).toBeLessThanOrEqual(1);
    }
  });

  it("alpha 1 blacks out G and B under the mask", () => {
    const decoded = decodeOverlay(fusedPair(200, 140), 2, 1);
    const out = recompose(decoded, 1);
    expect([out[0], out[1], out[2]]).toEqual([255, 0, 0]);
    expect([out[4], out[5], out[6]]).toEqual([140, 140, 140]);
  });

  it("round trips decode -> recompose -> decode at the server tint", () => {
    // decode inverts the fixed server fusion, so identity holds only there
    const first = decodeOverlay(fusedPair(180, 90), 2, 1);
    const second = decodeOverlay(recompose(first, SERVER_TINT), 2, 1);
    expect(Array.from(second.mask)).toEqual(Array.from(first.mask));
    for (let i = 0; i < first.gray.length; i++) {
      expect(second.gray[i]!).toBeCloseTo(first.gray[i]!, 1);
    }
  });

  it("rejects alpha outside [0, 1]", () => {
    const decoded = decodeOverlay(fusedPair(200, 140), 2, 1);
    expect(() => recompose(decoded, -0.1)).toThrow(/alpha/);
    expect(() => recompose(decoded, 1.5)).toThrow(/alpha/);
    expect(() => recompose(decoded, NaN)).toThrow(/alpha/);
  });
});
