/** Typed client for the generation service. Pure API consumer: every image
 * shown in the studio came through these calls. */

import {
  GenerateRequest,
  GenerateResponse,
  ModelInfo,
  SegmentationPayload,
} from "./wire";

export interface InterpolateRequest {
  model_id: string;
  mode: "latent" | "attribute" | "spatial";
  steps?: number;
  seed0?: number | null;
  seed1?: number | null;
  z0?: number[] | null;
  z1?: number[] | null;
  seed?: number | null;
  attributes?: number[] | null;
  attribute_list?: number[][] | null;
  segmentation?: SegmentationPayload | null;
  landmarks0?: number[][] | null;
  landmarks1?: number[][] | null;
}

export interface InterpolateFrame {
  index: number;
  t: number;
  t2?: number;
  image_b64: string;
}

export interface InterpolateResponse {
  model_id: string;
  spec_hash: string;
  frames: InterpolateFrame[];
}

export interface SegmentResponse {
  index_map_b64: string;
  height: number;
  width: number;
  n_s: number;
}

export class ApiError extends Error {
  readonly status: number;
  readonly detail: unknown;

  constructor(status: number, detail: unknown) {
    super(`API error ${status}: ${JSON.stringify(detail)}`);
    this.status = status;
    this.detail = detail;
  }
}

export class StudioApi {
  constructor(private readonly baseUrl: string) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const resp = await fetch(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    const payload = await resp.json();
    if (!resp.ok) throw new ApiError(resp.status, payload.detail ?? payload);
    return payload as T;
  }

  async models(): Promise<ModelInfo[]> {
    const resp = await fetch(`${this.baseUrl}/models`);
    const payload = await resp.json();
    if (!resp.ok) throw new ApiError(resp.status, payload);
    return payload.models as ModelInfo[];
  }

  generate(req: GenerateRequest): Promise<GenerateResponse> {
    return this.post<GenerateResponse>("/generate", req);
  }

  interpolate(req: InterpolateRequest): Promise<InterpolateResponse> {
    return this.post<InterpolateResponse>("/interpolate", req);
  }

  segment(modelId: string, imageB64: string): Promise<SegmentResponse> {
    return this.post<SegmentResponse>("/segment", {
      model_id: modelId,
      image_b64: imageB64,
    });
  }
}
