/**
 * UI session state: the click list, the last mask, and the rules of the
 * interaction loop. All mutating calls recompute the segmentation from the
 * full click list, so every state is reconstructible from (case, clicks);
 * at most one segment request is in flight, later edits coalesce into the
 * next request.
 */

import { Api, ApiError, type CaseInfo, type Metrics, type SegmentResponse } from "./api.js";

export type Polarity = "foreground" | "background";
export type Voxel = [number, number, number];

export const MAX_CLICKS_PER_POLARITY = 10;

export interface UiClick {
  pos: Voxel;
  polarity: Polarity;
}

export interface PlaceResult {
  ok: boolean;
  reason?: string;
}

export interface MetricsPoint {
  clickCount: number;
  metrics: Metrics;
}

/** Map a canvas-relative pixel position to a voxel on the visible slice. */
export function screenToVoxel(
  canvasX: number,
  canvasY: number,
  canvasW: number,
  canvasH: number,
  shape: [number, number, number],
  axis: 0 | 1 | 2,
  index: number,
): Voxel | null {
  const [rows, cols] = planeDims(shape, axis);
  if (canvasX < 0 || canvasY < 0 || canvasX >= canvasW || canvasY >= canvasH) return null;
  const col = Math.floor((canvasX / canvasW) * cols);
  const row = Math.floor((canvasY / canvasH) * rows);
  if (axis === 0) return [index, row, col];
  if (axis === 1) return [row, index, col];
  return [row, col, index];
}

/** (rows, cols) of the 2D plane shown for a given axis. */
export function planeDims(shape: [number, number, number], axis: 0 | 1 | 2): [number, number] {
  if (axis === 0) return [shape[1], shape[2]];
  if (axis === 1) return [shape[0], shape[2]];
  return [shape[0], shape[1]];
}

export class UiSession {
  axis: 0 | 1 | 2 = 0;
  index: number;
  clicks: UiClick[] = [];
  maskCounts: number[] | null = null;
  voxelCount = 0;
  metrics: Metrics | null = null;
  history: MetricsPoint[] = [];
  lastError: string | null = null;

  onUpdate: (() => void) | null = null;

  private acknowledged: UiClick[] = [];
  private refreshing: Promise<void> | null = null;
  private dirty = false;

  constructor(
    readonly caseInfo: CaseInfo,
    private readonly api: Api,
  ) {
    this.index = Math.floor(caseInfo.shape[0] / 2);
  }

  count(polarity: Polarity): number {
    return this.clicks.filter((c) => c.polarity === polarity).length;
  }

  clickLists(): { foreground: number[][]; background: number[][] } {
    return {
      foreground: this.clicks.filter((c) => c.polarity === "foreground").map((c) => [...c.pos]),
      background: this.clicks.filter((c) => c.polarity === "background").map((c) => [...c.pos]),
    };
  }

  /** Append a click if the rules allow it, then recompute the mask. */
  async placeClick(pos: Voxel, polarity: Polarity): Promise<PlaceResult> {
    this.lastError = null;
    if (!pos.every((c, i) => c >= 0 && c < this.caseInfo.shape[i])) {
      return { ok: false, reason: `voxel ${pos.join(",")} is outside the volume` };
    }
    if (this.count(polarity) >= MAX_CLICKS_PER_POLARITY) {
      return {
        ok: false,
        reason: `at most ${MAX_CLICKS_PER_POLARITY} ${polarity} clicks per case`,
      };
    }
    if (
      this.clicks.some(
        (c) => c.polarity === polarity && c.pos.every((v, i) => v === pos[i]),
      )
    ) {
      return { ok: false, reason: `duplicate ${polarity} click at ${pos.join(",")}` };
    }
    this.clicks.push({ pos: [...pos] as Voxel, polarity });
    await this.refresh();
    return this.lastError ? { ok: false, reason: this.lastError } : { ok: true };
  }

  /** Remove the most recent click and recompute (stateless server => exact restore). */
  async undo(): Promise<boolean> {
    if (this.clicks.length === 0) return false;
    this.clicks.pop();
    await this.refresh();
    return true;
  }

  async clear(): Promise<void> {
    this.clicks = [];
    await this.refresh();
  }

  /** Initial auto-mode segmentation (zero clicks). */
  async start(): Promise<void> {
    await this.refresh();
  }

  private refresh(): Promise<void> {
    this.dirty = true;
    if (!this.refreshing) {
      this.refreshing = this.drain().finally(() => {
        this.refreshing = null;
      });
    }
    return this.refreshing;
  }

  private async drain(): Promise<void> {
    while (this.dirty) {
      this.dirty = false;
      const snapshot = this.clicks.map((c) => ({ pos: [...c.pos] as Voxel, polarity: c.polarity }));
      try {
        const resp = await this.api.segment(this.caseInfo.id, {
          foreground: snapshot.filter((c) => c.polarity === "foreground").map((c) => [...c.pos]),
          background: snapshot.filter((c) => c.polarity === "background").map((c) => [...c.pos]),
        });
        this.apply(snapshot, resp);
      } catch (err) {
        // reject the edit: roll back to the last acknowledged click list
        this.clicks = this.acknowledged.map((c) => ({ pos: [...c.pos] as Voxel, polarity: c.polarity }));
        this.lastError =
          err instanceof ApiError ? `server rejected clicks: ${JSON.stringify(err.detail)}` : String(err);
        this.dirty = false;
      }
      this.onUpdate?.();
    }
  }

  private apply(snapshot: UiClick[], resp: SegmentResponse): void {
    this.acknowledged = snapshot;
    this.maskCounts = resp.mask_rle.counts;
    this.voxelCount = resp.voxel_count;
    this.metrics = resp.metrics ?? null;
    if (resp.metrics) {
      const point = { clickCount: snapshot.length, metrics: resp.metrics };
      const last = this.history[this.history.length - 1];
      if (!last || last.clickCount !== point.clickCount) this.history.push(point);
      else this.history[this.history.length - 1] = point;
    }
  }
}
