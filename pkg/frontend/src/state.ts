/**
 * Pose state, bounds discipline, and the overlay request scheduler.
 *
 * Pose values are kept as raw float64 end to end; only the on-screen labels
 * round. The scheduler enforces the two live-view rules: at most one overlay
 * request in flight, and a response only displays if it is newer than the
 * newest one already shown, so a slow response can never paint a stale frame
 * over a fresh one.
 */

import type { Pose } from "./api.js";

export interface PoseBounds {
  lo: Pose;
  hi: Pose;
}

export interface ClampResult {
  pose: Pose;
  clamped: boolean;
}

const clamp1 = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v));

export function clampPose(pose: Pose, bounds: PoseBounds): ClampResult {
  const out: Pose = {
    tx: clamp1(pose.tx, bounds.lo.tx, bounds.hi.tx),
    ty: clamp1(pose.ty, bounds.lo.ty, bounds.hi.ty),
    rz: clamp1(pose.rz, bounds.lo.rz, bounds.hi.rz),
    ry: clamp1(pose.ry, bounds.lo.ry, bounds.hi.ry),
  };
  const clamped = out.tx !== pose.tx || out.ty !== pose.ty || out.rz !== pose.rz || out.ry !== pose.ry;
  return { pose: out, clamped };
}

export function posesEqual(a: Pose, b: Pose): boolean {
  return a.tx === b.tx && a.ty === b.ty && a.rz === b.rz && a.ry === b.ry;
}

/** Absolute angular difference wrapped into [0, 180]. */
export function angleDiffDeg(a: number, b: number): number {
  const d = Math.abs(a - b) % 360;
  return d > 180 ? 360 - d : d;
}

export interface Residual {
  tx: number;
  ty: number;
  rz: number;
  ry: number;
  total: number;
}

/** Per-parameter absolute residual (translations mm, rotations deg, wrapped). */
export function poseResidual(a: Pose, b: Pose): Residual {
  const tx = Math.abs(a.tx - b.tx);
  const ty = Math.abs(a.ty - b.ty);
  const rz = angleDiffDeg(a.rz, b.rz);
  const ry = angleDiffDeg(a.ry, b.ry);
  return { tx, ty, rz, ry, total: tx + ty + rz + ry };
}

// fine steps: 1 px / 0.1 deg; holding shift steps 5 px / 0.5 deg
export const FINE_STEP_PX = 1.0;
export const FINE_STEP_DEG = 0.1;
export const COARSE_STEP_PX = 5.0;
export const COARSE_STEP_DEG = 0.5;

/**
 * Keyboard pose increment: arrows pan (pixel units scaled by spacing),
 * Alt+left/right spins rz, Alt+up/down tilts ry.
 */
export function arrowDelta(
  key: string,
  shift: boolean,
  alt: boolean,
  spacingMm: number,
): Partial<Pose> | null {
  const px = (shift ? COARSE_STEP_PX : FINE_STEP_PX) * spacingMm;
  const deg = shift ? COARSE_STEP_DEG : FINE_STEP_DEG;
  if (alt) {
    switch (key) {
      case "ArrowLeft":
        return { rz: -deg };
      case "ArrowRight":
        return { rz: deg };
      case "ArrowUp":
        return { ry: deg };
      case "ArrowDown":
        return { ry: -deg };
    }
    return null;
  }
  switch (key) {
    case "ArrowLeft":
      return { tx: -px };
    case "ArrowRight":
      return { tx: px };
    case "ArrowUp":
      return { ty: -px };
    case "ArrowDown":
      return { ty: px };
  }
  return null;
}

/** Current pose plus the dirty-vs-last-annotation flag. */
export class PoseStore {
  pose: Pose;
  readonly bounds: PoseBounds;
  readonly spacingMm: number;
  private lastSaved: Pose | null = null;

  constructor(initial: Pose, bounds: PoseBounds, spacingMm: number) {
    this.pose = { ...initial };
    this.bounds = bounds;
    this.spacingMm = spacingMm;
  }

  /** Apply an absolute pose, clamped to bounds; returns whether clamping hit. */
  set(pose: Pose): ClampResult {
    const result = clampPose(pose, this.bounds);
    this.pose = result.pose;
    return result;
  }

  nudge(delta: Partial<Pose>): ClampResult {
    return this.set({
      tx: this.pose.tx + (delta.tx ?? 0),
      ty: this.pose.ty + (delta.ty ?? 0),
      rz: this.pose.rz + (delta.rz ?? 0),
      ry: this.pose.ry + (delta.ry ?? 0),
    });
  }

  get dirty(): boolean {
    return this.lastSaved === null || !posesEqual(this.pose, this.lastSaved);
  }

  /** Record a successful save; the saved pose must be the service's echo. */
  markSaved(pose: Pose): void {
    this.lastSaved = { ...pose };
  }

  savedPose(): Pose | null {
    return this.lastSaved === null ? null : { ...this.lastSaved };
  }

  /** Residual between the displayed pose and the last saved annotation. */
  residualVsSaved(): Residual | null {
    return this.lastSaved === null ? null : poseResidual(this.pose, this.lastSaved);
  }
}

export interface ScheduledResult<T> {
  value: T;
  pose: Pose;
  seq: number;
}

/**
 * Serializes overlay fetches: one request in flight, latest pose wins, and
 * out-of-order responses are dropped instead of displayed.
 */
export class OverlayScheduler<T> {
  private fetcher: (pose: Pose, seq: number) => Promise<T>;
  private onDisplay: (shown: ScheduledResult<T>) => void;
  private onError: (err: unknown, pose: Pose) => void;

  private counter = 0;
  private shownSeq = 0;
  private inFlight = false;
  private pending: Pose | null = null;

  constructor(
    fetcher: (pose: Pose, seq: number) => Promise<T>,
    onDisplay: (shown: ScheduledResult<T>) => void,
    onError: (err: unknown, pose: Pose) => void = () => {},
  ) {
    this.fetcher = fetcher;
    this.onDisplay = onDisplay;
    this.onError = onError;
  }

  /** How many requests have been issued (for tests and diagnostics). */
  get issued(): number {
    return this.counter;
  }

  get busy(): boolean {
    return this.inFlight;
  }

  request(pose: Pose): void {
    this.pending = { ...pose };
    if (!this.inFlight) this.issue();
  }

  private issue(): void {
    if (this.pending === null) return;
    const pose = this.pending;
    this.pending = null;
    const seq = ++this.counter;
    this.inFlight = true;
    this.fetcher(pose, seq)
      .then((value) => {
        if (seq > this.shownSeq) {
          this.shownSeq = seq;
          this.onDisplay({ value, pose, seq });
        }
      })
      .catch((err) => this.onError(err, pose))
      .finally(() => {
        this.inFlight = false;
        this.issue();
      });
  }
}
