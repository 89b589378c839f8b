/**
 * Rate limiter for pose scrubbing.
 *
 * Leading + trailing throttle: an isolated call fires immediately (a single
 * slider tick renders without artificial delay), a continuous stream fires
 * once per interval with the newest arguments, and the final call in a burst
 * is never dropped. With the default 100 ms interval the overlay endpoint
 * sees at most 10 requests per second.
 */

export const OVERLAY_MIN_INTERVAL_MS = 100;

export function throttle<A extends unknown[]>(
  fn: (...args: A) => void,
  intervalMs: number,
): ((...args: A) => void) & { cancel: () => void } {
  let lastFire = -Infinity;
  let timer: ReturnType<typeof setTimeout> | null = null;
  let queued: A | null = null;

  const fire = (args: A) => {
    lastFire = Date.now();
    fn(...args);
  };

  const throttled = (...args: A) => {
    const now = Date.now();
    if (timer === null && now - lastFire >= intervalMs) {
      fire(args);
      return;
    }
    queued = args;
    if (timer === null) {
      timer = setTimeout(() => {
        timer = null;
        if (queued !== null) {
          const next = queued;
          queued = null;
          fire(next);
        }
      }, intervalMs - (now - lastFire));
    }
  };

  throttled.cancel = () => {
    if (timer !== null) clearTimeout(timer);
    timer = null;
    queued = null;
  };

  return throttled;
}
