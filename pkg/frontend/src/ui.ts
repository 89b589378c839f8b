/**
 * DOM layer: case picker, pose controls, live overlay canvas, save flow.
 *
 * All pose math and request discipline live in state.ts; this file only
 * binds widgets to the store/scheduler and paints decoded overlays.
 */

import { ApiError, Client, type CaseSummary, type OverlayResult, type Pose } from "./api.js";
import { decodeOverlay, recompose, type DecodedOverlay } from "./compose.js";
import { OVERLAY_MIN_INTERVAL_MS, throttle } from "./throttle.js";
import {
  arrowDelta,
  FINE_STEP_DEG,
  COARSE_STEP_DEG,
  OverlayScheduler,
  PoseStore,
  type PoseBounds,
} from "./state.js";

const PANEL_HTML = `
  <div class="vr-banner" id="vr-banner" hidden></div>
  <div class="vr-toolbar">
    <label>Case <select id="vr-case"></select></label>
    <span id="vr-reward" class="vr-reward">reward: n/a</span>
    <span id="vr-dirty" class="vr-dirty" hidden>unsaved</span>
  </div>
  <div class="vr-main">
    <canvas id="vr-canvas" tabindex="0"></canvas>
    <div class="vr-controls">
      <div class="vr-slider"><label>T<sub>x</sub> (mm)</label>
        <input id="vr-tx" type="range"><span id="vr-tx-val"></span></div>
      <div class="vr-slider"><label>T<sub>y</sub> (mm)</label>
        <input id="vr-ty" type="range"><span id="vr-ty-val"></span></div>
      <div class="vr-slider"><label>R<sub>z</sub> (deg)</label>
        <input id="vr-rz" type="range"><span id="vr-rz-val"></span></div>
      <div class="vr-slider"><label>R<sub>y</sub> (deg)</label>
        <input id="vr-ry" type="range"><span id="vr-ry-val"></span></div>
      <div class="vr-slider"><label>Tint</label>
        <input id="vr-alpha" type="range" min="0" max="1" step="0.05" value="0.5">
        <span id="vr-alpha-val">0.50</span></div>
      <div class="vr-save">
        <input id="vr-annotator" placeholder="annotator id" value="anonymous">
        <button id="vr-save">Save ground truth (s)</button>
      </div>
      <div id="vr-residual" class="vr-residual"></div>
      <div class="vr-hint">
        drag to pan · wheel spins R<sub>z</sub> · arrows pan 1 px (shift: 5 px) ·
        alt+arrows rotate 0.1° (shift: 0.5°)
      </div>
    </div>
  </div>
`;

function fmt(v: number): string {
  return v.toFixed(3);
}

export class AnnotatorUi {
  private client: Client;
  private root: HTMLElement;
  private summaries: CaseSummary[] = [];
  private caseSummary: CaseSummary | null = null;
  private store: PoseStore | null = null;
  private scheduler: OverlayScheduler<OverlayResult> | null = null;
  private requestOverlay: (() => void) & { cancel: () => void };
  private decoded: DecodedOverlay | null = null;
  private displayGen = 0;
  private alpha = 0.5;

  constructor(root: HTMLElement, client: Client) {
    this.root = root;
    this.client = client;
    root.innerHTML = PANEL_HTML;
    this.requestOverlay = throttle(() => {
      if (this.store && this.scheduler) this.scheduler.request(this.store.pose);
    }, OVERLAY_MIN_INTERVAL_MS);
    this.bind();
  }

  private el<T extends HTMLElement>(id: string): T {
    return this.root.querySelector(`#${id}`) as T;
  }

  async start(): Promise<void> {
    try {
      this.summaries = await this.client.listCases();
    } catch (err) {
      this.setControlsEnabled(false);
      this.banner(`cannot reach service: ${String(err)}`);
      return;
    }
    const select = this.el<HTMLSelectElement>("vr-case");
    select.innerHTML = this.summaries
      .map((s) => `<option value="${s.case_id}">${s.case_id}</option>`)
      .join("");
    if (this.summaries.length === 0) {
      this.setControlsEnabled(false);
      this.banner("service has no cases");
      return;
    }
    this.loadCase(this.summaries[0]!.case_id);
  }

  private banner(text: string | null): void {
    const el = this.el<HTMLDivElement>("vr-banner");
    el.hidden = text === null;
    el.textContent = text ?? "";
  }

  private setControlsEnabled(enabled: boolean): void {
    for (const id of ["vr-tx", "vr-ty", "vr-rz", "vr-ry", "vr-alpha", "vr-annotator"]) {
      this.el<HTMLInputElement>(id).disabled = !enabled;
    }
    this.el<HTMLButtonElement>("vr-save").disabled = !enabled;
  }

  private loadCase(caseId: string): void {
    const summary = this.summaries.find((s) => s.case_id === caseId);
    if (!summary) {
      this.store = null;
      this.scheduler = null;
      this.setControlsEnabled(false);
      this.banner(`unknown case ${caseId}`);
      return;
    }
    this.caseSummary = summary;
    this.decoded = null; // previous case's pixels must not repaint here
    const bounds: PoseBounds = {
      lo: { tx: summary.pose_lo[0]!, ty: summary.pose_lo[1]!, rz: summary.pose_lo[2]!, ry: summary.pose_lo[3]! },
      hi: { tx: summary.pose_hi[0]!, ty: summary.pose_hi[1]!, rz: summary.pose_hi[2]!, ry: summary.pose_hi[3]! },
    };
    const initial: Pose = {
      tx: summary.initial_pose.tx_mm,
      ty: summary.initial_pose.ty_mm,
      rz: summary.initial_pose.rz_deg,
      ry: summary.initial_pose.ry_deg,
    };
    this.store = new PoseStore(initial, bounds, summary.spacing_mm);
    const canvas = this.el<HTMLCanvasElement>("vr-canvas");
    canvas.width = summary.dsa_dims[0]!;
    canvas.height = summary.dsa_dims[1]!;
    this.scheduler = new OverlayScheduler(
      (pose) => this.client.fetchOverlay(summary.case_id, pose),
      (shown) => this.display(shown.value),
      (err) => this.banner(err instanceof ApiError ? err.detail : String(err)),
    );
    for (const [id, lo, hi] of [
      ["vr-tx", bounds.lo.tx, bounds.hi.tx],
      ["vr-ty", bounds.lo.ty, bounds.hi.ty],
      ["vr-rz", bounds.lo.rz, bounds.hi.rz],
      ["vr-ry", bounds.lo.ry, bounds.hi.ry],
    ] as const) {
      const slider = this.el<HTMLInputElement>(id);
      slider.min = String(lo);
      slider.max = String(hi);
      slider.step = "any";
    }
    this.setControlsEnabled(true);
    this.banner(null);
    this.syncControls();
    this.scheduler.request(this.store.pose); // first paint bypasses the throttle
  }

  private async display(result: OverlayResult): Promise<void> {
    this.banner(null);
    this.el<HTMLSpanElement>("vr-reward").textContent =
      `reward: ${result.reward.toFixed(4)} (fg ${result.fgMean.toFixed(3)}, bg ${result.bgMean.toFixed(3)})`;
    const canvas = this.el<HTMLCanvasElement>("vr-canvas");
    const gen = ++this.displayGen;
    const bitmap = await createImageBitmap(result.blob);
    // a newer response may have finished decoding while we awaited
    if (gen !== this.displayGen) return;
    const ctx = canvas.getContext("2d")!;
    ctx.drawImage(bitmap, 0, 0);
    const raw = ctx.getImageData(0, 0, canvas.width, canvas.height);
    this.decoded = decodeOverlay(raw.data, canvas.width, canvas.height);
    this.paint();
  }

  private paint(): void {
    if (!this.decoded) return;
    const canvas = this.el<HTMLCanvasElement>("vr-canvas");
    const ctx = canvas.getContext("2d")!;
    const rgba = recompose(this.decoded, this.alpha);
    ctx.putImageData(new ImageData(rgba, this.decoded.width, this.decoded.height), 0, 0);
  }

  private syncControls(clamped = false): void {
    if (!this.store) return;
    const pose = this.store.pose;
    for (const [id, v] of [
      ["vr-tx", pose.tx],
      ["vr-ty", pose.ty],
      ["vr-rz", pose.rz],
      ["vr-ry", pose.ry],
    ] as const) {
      this.el<HTMLInputElement>(id).value = String(v);
      this.el<HTMLSpanElement>(`${id}-val`).textContent = fmt(v);
    }
    this.el<HTMLSpanElement>("vr-dirty").hidden = !this.store.dirty;
    const residual = this.store.residualVsSaved();
    this.el<HTMLDivElement>("vr-residual").textContent = residual
      ? `Δ vs saved: ${fmt(residual.tx)} / ${fmt(residual.ty)} mm, ` +
        `${fmt(residual.rz)} / ${fmt(residual.ry)} deg`
      : "";
    const canvas = this.el<HTMLCanvasElement>("vr-canvas");
    canvas.classList.toggle("vr-clamped", clamped);
  }

  private poseChanged(clamped: boolean): void {
    this.syncControls(clamped);
    this.requestOverlay();
  }

  private bind(): void {
    this.el<HTMLSelectElement>("vr-case").addEventListener("change", (ev) => {
      this.loadCase((ev.target as HTMLSelectElement).value);
    });

    for (const key of ["tx", "ty", "rz", "ry"] as const) {
      this.el<HTMLInputElement>(`vr-${key}`).addEventListener("input", (ev) => {
        if (!this.store) return;
        const value = parseFloat((ev.target as HTMLInputElement).value);
        const { clamped } = this.store.set({ ...this.store.pose, [key]: value });
        this.poseChanged(clamped);
      });
    }

    this.el<HTMLInputElement>("vr-alpha").addEventListener("input", (ev) => {
      this.alpha = parseFloat((ev.target as HTMLInputElement).value);
      this.el<HTMLSpanElement>("vr-alpha-val").textContent = this.alpha.toFixed(2);
      this.paint(); // recomposite locally, no service request
    });

    const canvas = this.el<HTMLCanvasElement>("vr-canvas");
    let dragging: { x: number; y: number } | null = null;
    canvas.addEventListener("pointerdown", (ev) => {
      dragging = { x: ev.clientX, y: ev.clientY };
      canvas.setPointerCapture(ev.pointerId);
    });
    canvas.addEventListener("pointermove", (ev) => {
      if (!dragging || !this.store || !this.caseSummary) return;
      const rect = canvas.getBoundingClientRect();
      const pxPerClient = canvas.width / rect.width;
      const dxPx = (ev.clientX - dragging.x) * pxPerClient;
      const dyPx = (ev.clientY - dragging.y) * pxPerClient;
      dragging = { x: ev.clientX, y: ev.clientY };
      const s = this.store.spacingMm;
      const { clamped } = this.store.nudge({ tx: dxPx * s, ty: dyPx * s });
      this.poseChanged(clamped);
    });
    canvas.addEventListener("pointerup", () => (dragging = null));
    canvas.addEventListener(
      "wheel",
      (ev) => {
        if (!this.store) return;
        ev.preventDefault();
        const step = ev.shiftKey ? COARSE_STEP_DEG : FINE_STEP_DEG;
        const { clamped } = this.store.nudge({ rz: (ev.deltaY < 0 ? 1 : -1) * step });
        this.poseChanged(clamped);
      },
      { passive: false },
    );

    document.addEventListener("keydown", (ev) => {
      if (!this.store) return;
      // leave text fields, sliders and the case picker their native keys
      if (ev.target instanceof HTMLInputElement || ev.target instanceof HTMLSelectElement) return;
      if (ev.key === "s") {
        ev.preventDefault();
        void this.save();
        return;
      }
      const delta = arrowDelta(ev.key, ev.shiftKey, ev.altKey, this.store.spacingMm);
      if (delta) {
        ev.preventDefault();
        const { clamped } = this.store.nudge(delta);
        this.poseChanged(clamped);
      }
    });

    this.el<HTMLButtonElement>("vr-save").addEventListener("click", () => void this.save());
  }

  private async save(): Promise<void> {
    if (!this.store || !this.caseSummary) return;
    const annotator = this.el<HTMLInputElement>("vr-annotator").value || "anonymous";
    try {
      const record = await this.client.postAnnotation(
        this.caseSummary.case_id, this.store.pose, annotator,
      );
      // trust the echo, not our copy: saved == displayed must hold exactly
      this.store.markSaved({
        tx: record.pose.tx_mm,
        ty: record.pose.ty_mm,
        rz: record.pose.rz_deg,
        ry: record.pose.ry_deg,
      });
      this.banner(null);
      this.syncControls();
      this.el<HTMLSpanElement>("vr-reward").textContent =
        `saved: reward ${record.reward.toFixed(4)} by ${record.annotator}`;
    } catch (err) {
      // keep the dirty flag: the annotation did not land
      this.banner(err instanceof ApiError ? `save failed: ${err.detail}` : String(err));
    }
  }
}
