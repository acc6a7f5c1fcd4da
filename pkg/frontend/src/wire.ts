/** Wire formats of the generation API and the client-side validation that
 * mirrors the server's rules: a request failing here would fail there. */

import { decodeBase64, encodeBase64 } from "./b64";

export const MAX_PAYLOAD_BYTES = 8 * 1024 * 1024;

export interface ModelInfo {
  id: string;
  image_size: number;
  n_s: number;
  n_c: number;
  n_z: number;
  generator_order: string;
}

export interface SegmentationPayload {
  data_b64: string;
  height: number;
  width: number;
  n_s: number;
}

export interface GenerateRequest {
  model_id: string;
  seed?: number | null;
  z?: number[] | null;
  attributes: number[];
  segmentation: SegmentationPayload;
}

export interface GenerateResponse {
  model_id: string;
  image_b64: string;
  seed: number | null;
  z_sha256: string;
  attributes: number[];
  segmentation_sha256: string;
}

export interface ValidationIssue {
  field: string;
  reason: string;
}

export function encodeIndexMap(
  data: Uint8Array,
  height: number,
  width: number,
  nS: number,
): SegmentationPayload {
  if (data.length !== height * width) {
    throw new Error(`index map has ${data.length} bytes, expected ${height * width}`);
  }
  return { data_b64: encodeBase64(data), height, width, n_s: nS };
}

export function decodeIndexMap(payload: SegmentationPayload): Uint8Array<ArrayBuffer> {
  const raw = decodeBase64(payload.data_b64);
  if (raw.length !== payload.height * payload.width) {
    throw new Error(
      `payload decodes to ${raw.length} bytes, expected ${payload.height * payload.width}`,
    );
  }
  return raw;
}

/** Mirror of the server's request validation. Empty array means acceptable. */
export function validateGenerateRequest(
  req: GenerateRequest,
  model: ModelInfo,
): ValidationIssue[] {
  const issues: ValidationIssue[] = [];
  const seg = req.segmentation;

  if (!seg || typeof seg.data_b64 !== "string") {
    issues.push({ field: "segmentation", reason: "segmentation payload missing" });
    return issues;
  }
  if (seg.data_b64.length > MAX_PAYLOAD_BYTES) {
    issues.push({
      field: "segmentation.data_b64",
      reason: `payload exceeds the ${MAX_PAYLOAD_BYTES} byte limit`,
    });
    return issues;
  }
  if (seg.height !== model.image_size || seg.width !== model.image_size) {
    issues.push({
      field: "segmentation",
      reason: `expected ${model.image_size}x${model.image_size}, got ${seg.height}x${seg.width}`,
    });
  }
  if (seg.n_s !== model.n_s) {
    issues.push({ field: "segmentation.n_s", reason: `expected ${model.n_s}, got ${seg.n_s}` });
  }
  let decoded: Uint8Array | null = null;
  try {
    decoded = decodeBase64(seg.data_b64);
  } catch {
    issues.push({ field: "segmentation.data_b64", reason: "not valid base64" });
  }
  if (decoded) {
    if (decoded.length !== seg.height * seg.width) {
      issues.push({
        field: "segmentation.data_b64",
        reason: `expected ${seg.height * seg.width} bytes, got ${decoded.length}`,
      });
    }
    for (const v of decoded) {
      if (v >= model.n_s) {
        issues.push({
          field: "segmentation.data_b64",
          reason: `class index ${v} out of range for n_s=${model.n_s}`,
        });
        break;
      }
    }
  }

  if (!Array.isArray(req.attributes) || req.attributes.length !== model.n_c) {
    issues.push({
      field: "attributes",
      reason: `expected ${model.n_c} bits, got ${req.attributes?.length ?? 0}`,
    });
  } else if (!req.attributes.every((b) => b === 0 || b === 1)) {
    issues.push({ field: "attributes", reason: "attribute bits must be 0 or 1" });
  }

  if (req.z != null) {
    if (req.z.length !== model.n_z) {
      issues.push({ field: "z", reason: `expected ${model.n_z} values, got ${req.z.length}` });
    } else if (!req.z.every((v) => Number.isFinite(v))) {
      issues.push({ field: "z", reason: "latent values must be finite" });
    }
  } else if (req.seed != null && !Number.isInteger(req.seed)) {
    issues.push({ field: "seed", reason: "seed must be an integer" });
  }
  return issues;
}

export async function sha256Hex(bytes: Uint8Array): Promise<string> {
  const copy = new Uint8Array(bytes);
  const digest = await crypto.subtle.digest("SHA-256", copy.buffer);
  return [...new Uint8Array(digest)].map((b) => b.toString(16).padStart(2, "0")).join("");
}
