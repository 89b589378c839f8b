/**
 * Typed client for the registration service's /v1 endpoints.
 *
 * Pose numbers travel as their shortest round-trip decimal representation
 * (JSON.stringify / URLSearchParams both use it), so a float64 pose survives
 * the wire bit-exactly in both directions. Reward values ride in response
 * headers next to the overlay image so the two can never disagree.
 */

export interface Pose {
  tx: number;
  ty: number;
  rz: number;
  ry: number;
}

export interface CaseSummary {
  case_id: string;
  volume_dims: number[];
  dsa_dims: number[];
  spacing_mm: number;
  has_truth: boolean;
  initial_pose: { tx_mm: number; ty_mm: number; rz_deg: number; ry_deg: number };
  pose_bounds_px: number[];
  pose_bounds_deg: number[];
  pose_lo: number[];
  pose_hi: number[];
  annotation_count: number;
}

export interface AnnotationRecord {
  case_id: string;
  pose: { tx_mm: number; ty_mm: number; rz_deg: number; ry_deg: number };
  reward: number;
  fg_mean: number;
  bg_mean: number;
  annotator: string;
  timestamp: number;
}

export interface OverlayResult {
  blob: Blob;
  reward: number;
  fgMean: number;
  bgMean: number;
}

export class ApiError extends Error {
  status: number;
  detail: string;

  constructor(status: number, detail: string) {
    super(`service error ${status}: ${detail}`);
    this.status = status;
    this.detail = detail;
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) return;
  let detail = res.statusText;
  try {
    const body = await res.json();
    if (typeof body.detail === "string") detail = body.detail;
  } catch {
    /* non-JSON error body; keep statusText */
  }
  throw new ApiError(res.status, detail);
}

export class Client {
  private base: string;
  private fetchFn: FetchLike;

  constructor(baseUrl = "", fetchFn: FetchLike = (...a) => globalThis.fetch(...a)) {
    this.base = baseUrl.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  overlayUrl(caseId: string, pose: Pose): string {
    const q = new URLSearchParams({
      tx: String(pose.tx),
      ty: String(pose.ty),
      rz: String(pose.rz),
      ry: String(pose.ry),
    });
    return `${this.base}/v1/cases/${encodeURIComponent(caseId)}/overlay?${q}`;
  }

  async listCases(): Promise<CaseSummary[]> {
    const res = await this.fetchFn(`${this.base}/v1/cases`);
    await raiseForStatus(res);
    return (await res.json()).cases;
  }

  async fetchOverlay(caseId: string, pose: Pose): Promise<OverlayResult> {
    const res = await this.fetchFn(this.overlayUrl(caseId, pose));
    await raiseForStatus(res);
    return {
      blob: await res.blob(),
      reward: Number(res.headers.get("X-Reward")),
      fgMean: Number(res.headers.get("X-Fg-Mean")),
      bgMean: Number(res.headers.get("X-Bg-Mean")),
    };
  }

  async postAnnotation(caseId: string, pose: Pose, annotator: string): Promise<AnnotationRecord> {
    const res = await this.fetchFn(`${this.base}/v1/cases/${encodeURIComponent(caseId)}/annotations`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        pose: { tx_mm: pose.tx, ty_mm: pose.ty, rz_deg: pose.rz, ry_deg: pose.ry },
        annotator,
      }),
    });
    await raiseForStatus(res);
    return res.json();
  }

  async listAnnotations(caseId: string): Promise<AnnotationRecord[]> {
    const res = await this.fetchFn(`${this.base}/v1/cases/${encodeURIComponent(caseId)}/annotations`);
    await raiseForStatus(res);
    return (await res.json()).annotations;
  }
}
