/** The segmentation paint surface: a class-index buffer with brush,
 * polygon fill, template stamping, eyedropper, and full undo/redo history.
 * Export emits the exact wire payload of POST /generate. */

import { SegmentationPayload, decodeIndexMap, encodeIndexMap } from "./wire";

export class PaintSurface {
  readonly width: number;
  readonly height: number;
  readonly nS: number;
  private buffer: Uint8Array;
  private undoStack: Uint8Array[] = [];
  private redoStack: Uint8Array[] = [];

  constructor(width: number, height: number, nS: number, fill = 0) {
    if (nS < 2) throw new Error("need at least 2 classes");
    if (fill >= nS) throw new Error(`fill class ${fill} out of range`);
    this.width = width;
    this.height = height;
    this.nS = nS;
    this.buffer = new Uint8Array(width * height).fill(fill);
  }

  get data(): Uint8Array {
    return this.buffer;
  }

  classAt(x: number, y: number): number {
    this.checkBounds(x, y);
    return this.buffer[y * this.width + x];
  }

  private checkBounds(x: number, y: number) {
    if (x < 0 || y < 0 || x >= this.width || y >= this.height) {
      throw new Error(`(${x}, ${y}) outside ${this.width}x${this.height}`);
    }
  }

  private checkClass(classIndex: number) {
    if (!Number.isInteger(classIndex) || classIndex < 0 || classIndex >= this.nS) {
      throw new Error(`class ${classIndex} out of range [0, ${this.nS})`);
    }
  }

  private snapshot() {
    this.undoStack.push(this.buffer.slice());
    this.redoStack.length = 0;
  }

  get canUndo(): boolean {
    return this.undoStack.length > 0;
  }

  get canRedo(): boolean {
    return this.redoStack.length > 0;
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.redoStack.push(this.buffer);
    this.buffer = prev;
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (!next) return false;
    this.undoStack.push(this.buffer);
    this.buffer = next;
    return true;
  }

  /** Circular brush stamp centered on (cx, cy). */
  brush(cx: number, cy: number, radius: number, classIndex: number) {
    this.checkClass(classIndex);
    this.snapshot();
    const r2 = radius * radius;
    const x0 = Math.max(0, Math.floor(cx - radius));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + radius));
    const y0 = Math.max(0, Math.floor(cy - radius));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + radius));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const dx = x - cx;
        const dy = y - cy;
        if (dx * dx + dy * dy <= r2) this.buffer[y * this.width + x] = classIndex;
      }
    }
  }

  /** Even-odd polygon fill; pixel centers on the integer grid, boundary inside. */
  polygonFill(points: Array<[number, number]>, classIndex: number) {
    this.checkClass(classIndex);
    this.snapshot();
    this.fillPolygonNoHistory(points, classIndex);
  }

  fillPolygonNoHistory(points: Array<[number, number]>, classIndex: number) {
    if (points.length < 3) throw new Error("polygon needs at least 3 points");
    if (Math.abs(signedArea(points)) < 1e-12) return;
    for (let y = 0; y < this.height; y++) {
      for (let x = 0; x < this.width; x++) {
        if (pointInPolygon(x, y, points)) this.buffer[y * this.width + x] = classIndex;
      }
    }
  }

  /** Paint several class-indexed polygons in order as one undoable action. */
  stamp(regions: Array<{ classIndex: number; polygons: Array<Array<[number, number]>> }>) {
    for (const region of regions) this.checkClass(region.classIndex);
    this.snapshot();
    for (const region of regions) {
      for (const poly of region.polygons) this.fillPolygonNoHistory(poly, region.classIndex);
    }
  }

  clear(classIndex = 0) {
    this.checkClass(classIndex);
    this.snapshot();
    this.buffer.fill(classIndex);
  }

  exportWire(): SegmentationPayload {
    return encodeIndexMap(this.buffer, this.height, this.width, this.nS);
  }

  importWire(payload: SegmentationPayload) {
    if (payload.height !== this.height || payload.width !== this.width) {
      throw new Error(
        `import is ${payload.width}x${payload.height}, surface is ${this.width}x${this.height}`,
      );
    }
    const raw = decodeIndexMap(payload);
    for (const v of raw) {
      if (v >= this.nS) throw new Error(`imported class ${v} out of range`);
    }
    this.snapshot();
    this.buffer = raw.slice();
  }

  importIndexMap(data: Uint8Array) {
    if (data.length !== this.width * this.height) {
      throw new Error(`expected ${this.width * this.height} bytes, got ${data.length}`);
    }
    for (const v of data) {
      if (v >= this.nS) throw new Error(`imported class ${v} out of range`);
    }
    this.snapshot();
    this.buffer = data.slice();
  }
}

function signedArea(points: Array<[number, number]>): number {
  let area = 0;
  for (let i = 0; i < points.length; i++) {
    const [x1, y1] = points[i];
    const [x2, y2] = points[(i + 1) % points.length];
    area += x1 * y2 - x2 * y1;
  }
  return area / 2;
}

export function pointInPolygon(
  px: number,
  py: number,
  points: Array<[number, number]>,
): boolean {
  let inside = false;
  const n = points.length;
  for (let i = 0; i < n; i++) {
    const [x1, y1] = points[i];
    const [x2, y2] = points[(i + 1) % n];
    // boundary counts as inside
    const dx = x2 - x1;
    const dy = y2 - y1;
    const seg2 = dx * dx + dy * dy;
    if (seg2 > 1e-18) {
      const cross = (px - x1) * dy - (py - y1) * dx;
      const t = ((px - x1) * dx + (py - y1) * dy) / seg2;
      if (Math.abs(cross) < 1e-9 * Math.max(1, Math.sqrt(seg2)) && t >= 0 && t <= 1) return true;
    }
    if (y1 > py !== y2 > py) {
      const xInt = x1 + ((py - y1) * dx) / dy;
      if (xInt > px) inside = !inside;
    }
  }
  return inside;
}
