/** Session gallery: every generated result with its full input provenance,
 * so any entry can be restored and regenerated byte-identically. Appends
 * happen in completion order; request ids prevent misattribution when
 * several generations are in flight. */

import { GenerateRequest, GenerateResponse, SegmentationPayload } from "./wire";

export interface ProvenanceRecord {
  requestId: number;
  modelId: string;
  seed: number | null;
  z: number[] | null;
  attributes: number[];
  segmentation: SegmentationPayload;
  segmentationSha256: string;
  imageB64: string;
  completedAt: number;
}

export class Gallery {
  private records: ProvenanceRecord[] = [];
  private nextRequestId = 1;
  private pending = new Map<number, GenerateRequest>();

  /** Reserve a request id before sending; ties the response to its inputs. */
  begin(req: GenerateRequest): number {
    const id = this.nextRequestId++;
    this.pending.set(id, structuredClone(req));
    return id;
  }

  /** Record a completed generation under its reserved id. */
  complete(requestId: number, resp: GenerateResponse, now = Date.now()): ProvenanceRecord {
    const req = this.pending.get(requestId);
    if (!req) throw new Error(`unknown request id ${requestId}`);
    this.pending.delete(requestId);
    const record: ProvenanceRecord = {
      requestId,
      modelId: req.model_id,
      seed: resp.seed,
      z: req.z ?? null,
      attributes: [...resp.attributes],
      segmentation: structuredClone(req.segmentation),
      segmentationSha256: resp.segmentation_sha256,
      imageB64: resp.image_b64,
      completedAt: now,
    };
    this.records.push(record);
    return record;
  }

  abort(requestId: number) {
    this.pending.delete(requestId);
  }

  get entries(): readonly ProvenanceRecord[] {
    return this.records;
  }

  get(requestId: number): ProvenanceRecord | undefined {
    return this.records.find((r) => r.requestId === requestId);
  }

  /** Rebuild the exact generation request from a stored record. */
  restoreRequest(record: ProvenanceRecord): GenerateRequest {
    return {
      model_id: record.modelId,
      seed: record.seed,
      z: record.z ? [...record.z] : null,
      attributes: [...record.attributes],
      segmentation: structuredClone(record.segmentation),
    };
  }

  exportSession(): string {
    return JSON.stringify(
      {
        version: 1,
        records: this.records.map((r) => ({ ...r, imageB64: undefined })),
      },
      null,
      2,
    );
  }

  importSession(payload: string) {
    const parsed = JSON.parse(payload);
    if (parsed.version !== 1 || !Array.isArray(parsed.records)) {
      throw new Error("not a session export");
    }
    for (const raw of parsed.records) {
      const record: ProvenanceRecord = {
        requestId: this.nextRequestId++,
        modelId: raw.modelId,
        seed: raw.seed ?? null,
        z: raw.z ?? null,
        attributes: raw.attributes,
        segmentation: raw.segmentation,
        segmentationSha256: raw.segmentationSha256,
        imageB64: "",
        completedAt: raw.completedAt ?? 0,
      };
      if (!record.modelId || !Array.isArray(record.attributes) || !record.segmentation) {
        throw new Error("malformed provenance record");
      }
      this.records.push(record);
    }
  }
}
