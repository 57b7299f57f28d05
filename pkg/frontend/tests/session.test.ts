import { beforeEach, describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";

import type {
  GraspSubmission,
  Progress,
  ScenePayload,
  SubmitResponse,
} from "../src/api.js";
import { AnnotationSessionStore } from "../src/session.js";

const here = dirname(fileURLToPath(import.meta.url));
const { b64 } = JSON.parse(readFileSync(join(here, "png_fixture.json"), "utf-8"));

const LO = 4;
const HI = 20;
const ANGLES = 16;

/** In-memory stand-in for the annotation backend (same contract). */
class MockBackend {
  scenes: number;
  index = 0;
  submissions: GraspSubmission[] = [];
  successEvery = 2; // every other submission "succeeds"
  failNextRequest = false;

  constructor(scenes: number) {
    this.scenes = scenes;
  }

  nextScene(): Promise<ScenePayload> {
    if (this.index >= this.scenes) {
      return Promise.resolve({
        status: "complete",
        labeled: this.submissions.length,
        success_count: 0,
      });
    }
    return Promise.resolve({
      status: "active",
      scene_id: `mock-${this.index}`,
      heightmap: b64,
      side_px: 24,
      pixel_scale: 0.45 / 24,
      graspable: { lo: LO, hi: HI },
      angle_count: ANGLES,
      stroke_px: 8,
    });
  }

  progress(): Promise<Progress> {
    return Promise.resolve({
      labeled: this.submissions.length,
      remaining: this.scenes - this.index,
      success_count: this.submissions.filter((_, i) => i % this.successEvery === 0).length,
    });
  }

  submitGrasp(sub: GraspSubmission): Promise<SubmitResponse> {
    if (this.failNextRequest) {
      this.failNextRequest = false;
      return Promise.reject(new Error("network down"));
    }
    if (sub.scene_id !== `mock-${this.index}`) {
      return Promise.reject(new Error("HTTP 409"));
    }
    this.submissions.push(sub);
    this.index += 1;
    const success = (this.submissions.length - 1) % this.successEvery === 0;
    return Promise.resolve({
      outcome: success ? "success" : "failure",
      failure_reason: success ? null : "no_object",
      heightmap: b64,
    });
  }
}

describe("annotation session store", () => {
  let backend: MockBackend;
  let store: AnnotationSessionStore;

  beforeEach(async () => {
    backend = new MockBackend(3);
    store = new AnnotationSessionStore(backend);
    await store.load();
  });

  it("loads the first scene", () => {
    expect(store.phase).toBe("active");
    expect(store.scene?.sceneId).toBe("mock-0");
    expect(store.scene?.image.width).toBe(24);
  });

  it("click inside the graspable region sets the selection exactly", () => {
    expect(store.select(10, 12)).toBe(true);
    expect(store.selection).toEqual({ row: 10, col: 12, angleIndex: 0 });
  });

  it("clicks outside the graspable region are ignored", () => {
    expect(store.select(LO - 1, 10)).toBe(false);
    expect(store.select(10, HI)).toBe(false);
    expect(store.selection).toBeNull();
  });

  it("angle stepping wraps through all 16 values both ways", () => {
    store.select(10, 10);
    for (let i = 0; i < ANGLES; i++) store.stepAngle(1);
    expect(store.selection?.angleIndex).toBe(0);
    store.stepAngle(-1);
    expect(store.selection?.angleIndex).toBe(ANGLES - 1);
  });

  it("submit advances and updates tallies by exactly one", async () => {
    store.select(10, 10);
    const before = store.submitted;
    const res = await store.submit();
    expect(res?.outcome).toBe("success");
    expect(store.submitted).toBe(before + 1);
    expect(store.scene?.sceneId).toBe("mock-1");
    expect(store.lastOutcome?.sceneId).toBe("mock-0");
  });

  it("failure responses surface the failure reason", async () => {
    store.select(10, 10);
    await store.submit(); // success
    store.select(11, 11);
    const res = await store.submit();
    expect(res?.outcome).toBe("failure");
    expect(store.lastOutcome?.failureReason).toBe("no_object");
  });

  it("network failure keeps the selection for a retry", async () => {
    store.select(9, 9);
    backend.failNextRequest = true;
    const res = await store.submit();
    expect(res).toBeNull();
    expect(store.selection).toEqual({ row: 9, col: 9, angleIndex: 0 });
    expect(store.errorMessage).toContain("selection kept");
    const retry = await store.submit();
    expect(retry?.outcome).toBe("success");
  });

  it("completes after the last scene with a summary", async () => {
    for (let i = 0; i < 3; i++) {
      store.select(10, 10);
      await store.submit();
    }
    expect(store.phase).toBe("complete");
    expect(store.submitted).toBe(3);
  });

  it("reload mid-session resumes from server state without corruption", async () => {
    store.select(10, 10);
    await store.submit();
    // a fresh store simulates a browser refresh
    const fresh = new AnnotationSessionStore(backend);
    await fresh.load();
    expect(fresh.phase).toBe("active");
    expect(fresh.submitted).toBe(1);
    expect(fresh.scene?.sceneId).toBe("mock-1");
    fresh.select(12, 12);
    await fresh.submit();
    expect(backend.submissions.length).toBe(2);
  });

  it("property: only coordinates within served bounds are ever posted", async () => {
    // replay a pseudo-random click/step/submit session; every submission
    // the backend sees must respect the bounds it served
    let seed = 12345;
    const rand = () => ((seed = (seed * 1103515245 + 12345) & 0x7fffffff) / 0x7fffffff);
    for (let step = 0; step < 200 && store.phase === "active"; step++) {
      const action = rand();
      if (action < 0.6) {
        store.select(Math.floor(rand() * 30) - 3, Math.floor(rand() * 30) - 3);
      } else if (action < 0.8) {
        store.stepAngle(rand() < 0.5 ? 1 : -1);
      } else if (store.selection) {
        await store.submit();
      }
    }
    expect(backend.submissions.length).toBeGreaterThan(0);
    for (const sub of backend.submissions) {
      expect(sub.row).toBeGreaterThanOrEqual(LO);
      expect(sub.row).toBeLessThan(HI);
      expect(sub.col).toBeGreaterThanOrEqual(LO);
      expect(sub.col).toBeLessThan(HI);
      expect(sub.angle_index).toBeGreaterThanOrEqual(0);
      expect(sub.angle_index).toBeLessThan(ANGLES);
    }
  });
});
