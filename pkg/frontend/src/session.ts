/**
 * Annotation session store: all UI behavior that isn't pixels on screen.
 *
 * Holds the active scene, at most one pending grasp selection (clamped to
 * the served graspable bounds), running tallies, and the last outcome.
 * The DOM layer only renders this state and forwards input events, so the
 * whole flow is testable headlessly against a real or mocked backend.
 */

import { AnnotationApi, ScenePayload, SubmitResponse } from "./api.js";
import { decodeBase64, decodeGray16Png, GrayImage } from "./png.js";

export interface Selection {
  row: number;
  col: number;
  angleIndex: number;
}

export interface ActiveScene {
  sceneId: string;
  image: GrayImage;
  sidePx: number;
  pixelScale: number;
  graspable: { lo: number; hi: number };
  angleCount: number;
  strokePx: number;
}

export type Phase = "loading" | "active" | "complete" | "error";

export interface Outcome {
  sceneId: string;
  outcome: "success" | "failure";
  failureReason: string | null;
  afterImage: GrayImage;
}

export class AnnotationSessionStore {
  phase: Phase = "loading";
  scene: ActiveScene | null = null;
  selection: Selection | null = null;
  lastOutcome: Outcome | null = null;
  submitted = 0;
  successes = 0;
  errorMessage: string | null = null;
  onChange: (() => void) | null = null;

  constructor(private api: AnnotationApi) {}

  private notify() {
    this.onChange?.();
  }

  /** Fetch the next scene and the server-side tallies (reload safe). */
  async load(): Promise<void> {
    this.phase = "loading";
    this.notify();
    try {
      const progress = await this.api.progress();
      this.submitted = progress.labeled;
      this.successes = progress.success_count;
      const payload = await this.api.nextScene();
      await this.applyScenePayload(payload);
    } catch (err) {
      this.phase = "error";
      this.errorMessage = String(err);
    }
    this.notify();
  }

  private async applyScenePayload(payload: ScenePayload): Promise<void> {
    if (payload.status === "complete") {
      this.phase = "complete";
      this.scene = null;
      this.selection = null;
      return;
    }
    const image = await decodeGray16Png(decodeBase64(payload.heightmap!));
    this.scene = {
      sceneId: payload.scene_id!,
      image,
      sidePx: payload.side_px!,
      pixelScale: payload.pixel_scale!,
      graspable: payload.graspable!,
      angleCount: payload.angle_count!,
      strokePx: payload.stroke_px!,
    };
    this.selection = null;
    this.phase = "active";
    this.errorMessage = null;
  }

  /** Clamp-free click handling: outside the graspable region it is ignored. */
  select(row: number, col: number): boolean {
    if (this.phase !== "active" || !this.scene) return false;
    const { lo, hi } = this.scene.graspable;
    if (row < lo || row >= hi || col < lo || col >= hi) return false;
    const angleIndex = this.selection ? this.selection.angleIndex : 0;
    this.selection = { row: Math.round(row), col: Math.round(col), angleIndex };
    this.notify();
    return true;
  }

  /** Step the grasp angle through the served grid, wrapping around. */
  stepAngle(delta: number): void {
    if (!this.scene || !this.selection) return;
    const n = this.scene.angleCount;
    this.selection = {
      ...this.selection,
      angleIndex: ((this.selection.angleIndex + delta) % n + n) % n,
    };
    this.notify();
  }

  angleRadians(): number {
    if (!this.scene || !this.selection) return 0;
    return (this.selection.angleIndex * Math.PI) / this.scene.angleCount;
  }

  /**
   * Submit the pending selection; on success advance to the next scene.
   * On a network failure the selection is preserved for a retry.
   */
  async submit(): Promise<SubmitResponse | null> {
    if (this.phase !== "active" || !this.scene || !this.selection) return null;
    const scene = this.scene;
    const sel = this.selection;
    let res: SubmitResponse;
    try {
      res = await this.api.submitGrasp({
        scene_id: scene.sceneId,
        row: sel.row,
        col: sel.col,
        angle_index: sel.angleIndex,
      });
    } catch (err) {
      this.errorMessage = `submit failed, selection kept: ${err}`;
      this.notify();
      return null;
    }
    this.submitted += 1;
    if (res.outcome === "success") this.successes += 1;
    this.lastOutcome = {
      sceneId: scene.sceneId,
      outcome: res.outcome,
      failureReason: res.failure_reason,
      afterImage: await decodeGray16Png(decodeBase64(res.heightmap)),
    };
    const payload = await this.api.nextScene();
    await this.applyScenePayload(payload);
    this.notify();
    return res;
  }
}
