/** Thin typed client for the clickseg HTTP API. */

export interface CaseInfo {
  id: string;
  shape: [number, number, number];
  spacing: [number, number, number];
  has_gt: boolean;
  has_ct: boolean;
}

export interface Metrics {
  dice: number;
  fpvol_mm3: number;
  fnvol_mm3: number;
}

export interface MaskRle {
  shape: [number, number, number];
  counts: number[];
}

export interface SegmentResponse {
  case_id: string;
  mask_rle: MaskRle;
  voxel_count: number;
  metrics?: Metrics;
  slice_counts?: number[];
}

export interface ClickLists {
  foreground: number[][];
  background: number[][];
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: unknown,
  ) {
    super(`API error ${status}`);
  }
}

export class Api {
  constructor(readonly baseUrl: string = "") {}

  async listCases(): Promise<CaseInfo[]> {
    const r = await fetch(`${this.baseUrl}/api/cases`);
    if (!r.ok) throw new ApiError(r.status, await r.text());
    return (await r.json()) as CaseInfo[];
  }

  async version(): Promise<string> {
    const r = await fetch(`${this.baseUrl}/api/version`);
    if (!r.ok) throw new ApiError(r.status, await r.text());
    return ((await r.json()) as { version: string }).version;
  }

  sliceUrl(
    caseId: string,
    axis: number,
    index: number,
    channel: "pet" | "ct" | "overlay",
    window?: [number, number],
  ): string {
    const params = new URLSearchParams({
      axis: String(axis),
      index: String(index),
      channel,
    });
    if (window) params.set("window", `${window[0]},${window[1]}`);
    return `${this.baseUrl}/api/cases/${encodeURIComponent(caseId)}/slice?${params}`;
  }

  async segment(caseId: string, clicks: ClickLists, debug = false): Promise<SegmentResponse> {
    const r = await fetch(`${this.baseUrl}/api/cases/${encodeURIComponent(caseId)}/segment`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ clicks, debug }),
    });
    if (!r.ok) {
      let detail: unknown;
      try {
        detail = (await r.json()) as { detail?: unknown };
      } catch {
        detail = await r.text();
      }
      throw new ApiError(r.status, detail);
    }
    return (await r.json()) as SegmentResponse;
  }
}
