/** Typed client for the annotation backend (the only endpoints the UI uses). */

export interface GraspableBounds {
  lo: number;
  hi: number;
}

export interface ScenePayload {
  status: "active" | "complete";
  scene_id?: string;
  heightmap?: string; // base64 16-bit grayscale PNG
  side_px?: number;
  pixel_scale?: number;
  graspable?: GraspableBounds;
  angle_count?: number;
  stroke_px?: number;
  labeled?: number;
  success_count?: number;
}

export interface SubmitResponse {
  outcome: "success" | "failure";
  failure_reason: string | null;
  heightmap: string;
}

export interface Progress {
  labeled: number;
  remaining: number;
  success_count: number;
}

export interface GraspSubmission {
  scene_id: string;
  row: number;
  col: number;
  angle_index: number;
}

/** What the session store needs from a backend (real or test double). */
export interface AnnotationApi {
  nextScene(): Promise<ScenePayload>;
  progress(): Promise<Progress>;
  submitGrasp(sub: GraspSubmission): Promise<SubmitResponse>;
}

export class ApiClient implements AnnotationApi {
  constructor(private base: string = "") {}

  private async get<T>(path: string): Promise<T> {
    const res = await fetch(this.base + path);
    if (!res.ok) throw new Error(`${path}: HTTP ${res.status}`);
    return res.json() as Promise<T>;
  }

  nextScene(): Promise<ScenePayload> {
    return this.get<ScenePayload>("/api/scene/next");
  }

  progress(): Promise<Progress> {
    return this.get<Progress>("/api/progress");
  }

  async submitGrasp(sub: GraspSubmission): Promise<SubmitResponse> {
    const res = await fetch(this.base + "/api/grasp", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(sub),
    });
    if (!res.ok) throw new Error(`/api/grasp: HTTP ${res.status}`);
    return res.json() as Promise<SubmitResponse>;
  }
}
