/**
 * Client-side recompositing of the fetched overlay.
 *
 * The service fuses with a fixed tint strength of 0.5: under the vessel mask
 * R = 255 and G = B = dsa/2, elsewhere R = G = B = dsa. That makes the fused
 * image invertible: the mask is exactly the pixels where R > G, and the
 * underlying DSA gray is G (off mask) or 2·G (under it). The opacity slider
 * then re-blends locally without another service round trip.
 */

export const SERVER_TINT = 0.5;

export interface DecodedOverlay {
  /** 1 where the projected silhouette covers the pixel. */
  mask: Uint8Array;
  /** Recovered DSA gray in [0, 1]. */
  gray: Float32Array;
  width: number;
  height: number;
}

/** Split a fused RGBA raster back into silhouette mask + DSA gray. */
export function decodeOverlay(rgba: Uint8ClampedArray, width: number, height: number): DecodedOverlay {
  const n = width * height;
  if (rgba.length !== 4 * n) {
    throw new Error(`rgba length ${rgba.length} does not match ${width}x${height}`);
  }
  const mask = new Uint8Array(n);
  const gray = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    const r = rgba[4 * i]!;
    const g = rgba[4 * i + 1]!;
    if (r > g) {
      mask[i] = 1;
      gray[i] = Math.min(1, g / 255 / (1 - SERVER_TINT));
    } else {
      gray[i] = g / 255;
    }
  }
  return { mask, gray, width, height };
}

/**
 * Re-render the overlay at a chosen tint opacity: masked pixels keep the
 * red channel saturated and darken G/B by `alpha`; alpha = 0 shows the
 * plain DSA.
 */
export function recompose(decoded: DecodedOverlay, alpha: number): Uint8ClampedArray<ArrayBuffer> {
  if (!(alpha >= 0 && alpha <= 1)) throw new Error(`alpha must be in [0, 1], got ${alpha}`);
  const { mask, gray } = decoded;
  const out = new Uint8ClampedArray(4 * mask.length);
  for (let i = 0; i < mask.length; i++) {
    const g255 = Math.round(gray[i]! * 255);
    if (mask[i] === 1 && alpha > 0) {
      out[4 * i] = 255;
      out[4 * i + 1] = out[4 * i + 2] = Math.round(gray[i]! * (1 - alpha) * 255);
    } else {
      out[4 * i] = out[4 * i + 1] = out[4 * i + 2] = g255;
    }
    out[4 * i + 3] = 255;
  }
  return out;
}
