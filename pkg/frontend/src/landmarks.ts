/** Face stamp geometry: the 68-point landmark convention grouped into six
 * paintable regions (face hull, two brows, eyes, nose, mouth), plus a
 * canned neutral face and landmark interpolation for the timeline. */

export type Point = [number, number];

export interface StampRegion {
  classIndex: number;
  pointGroups: number[][];
}

const FACE_HULL = [
  ...Array.from({ length: 17 }, (_, i) => i),
  26, 25, 24, 23, 22, 21, 20, 19, 18, 17,
];

/** Region paint order: hull first so inner features overwrite it. */
export const FACE_REGIONS: StampRegion[] = [
  { classIndex: 1, pointGroups: [FACE_HULL] },
  { classIndex: 2, pointGroups: [[17, 18, 19, 20, 21]] },
  { classIndex: 3, pointGroups: [[22, 23, 24, 25, 26]] },
  {
    classIndex: 4,
    pointGroups: [
      [36, 37, 38, 39, 40, 41],
      [42, 43, 44, 45, 46, 47],
    ],
  },
  { classIndex: 5, pointGroups: [[27, 31, 32, 33, 34, 35]] },
  {
    classIndex: 6,
    pointGroups: [[48, 49, 50, 51, 52, 53, 54, 55, 56, 57, 58, 59]],
  },
];

export const FACE_CLASS_COUNT = 7;

/** A neutral face on a unit [0,1] square; scale by the canvas size. */
export function neutralFaceLandmarks(size: number, jitterSeed?: number): Point[] {
  const pts: Point[] = new Array(68);
  const set = (i: number, x: number, y: number) => {
    pts[i] = [(x / 32) * (size - 1), (y / 32) * (size - 1)];
  };
  for (let i = 0; i < 17; i++) {
    const ang = (Math.PI * i) / 16;
    set(i, 16 - 11 * Math.cos(ang), 14 + 12 * Math.sin(ang));
  }
  for (let i = 0; i < 5; i++) {
    const t = i / 4;
    set(17 + i, 7 + 7 * t, 9 - 2 * Math.sin(Math.PI * t));
    set(22 + i, 18 + 7 * t, 9 - 2 * Math.sin(Math.PI * t));
  }
  for (let i = 0; i < 4; i++) set(27 + i, 16, 10 + 2 * i);
  for (let i = 0; i < 5; i++) set(31 + i, 16 + 2.5 * (-1 + i / 2), 17);
  for (let i = 0; i < 6; i++) {
    const ang = (2 * Math.PI * i) / 6;
    set(36 + i, 10 + 2.2 * Math.cos(ang), 11 + 1.2 * Math.sin(ang));
    set(42 + i, 22 + 2.2 * Math.cos(ang), 11 + 1.2 * Math.sin(ang));
  }
  for (let i = 0; i < 12; i++) {
    const ang = (2 * Math.PI * i) / 12;
    set(48 + i, 16 + 4 * Math.cos(ang), 21.5 + 2 * Math.sin(ang));
  }
  for (let i = 0; i < 8; i++) {
    const ang = (2 * Math.PI * i) / 8;
    set(60 + i, 16 + 2 * Math.cos(ang), 21.5 + 1 * Math.sin(ang));
  }
  if (jitterSeed !== undefined) {
    const rand = mulberry32(jitterSeed);
    const amp = size / 24;
    for (let i = 0; i < pts.length; i++) {
      pts[i] = [
        clamp(pts[i][0] + (rand() - 0.5) * amp, 0, size - 1),
        clamp(pts[i][1] + (rand() - 0.5) * amp, 0, size - 1),
      ];
    }
  }
  return pts;
}

export function lerpLandmarks(a: Point[], b: Point[], t: number): Point[] {
  if (a.length !== b.length) throw new Error("landmark counts differ");
  if (t < 0 || t > 1) throw new Error("t must lie in [0, 1]");
  return a.map(([x, y], i) => [(1 - t) * x + t * b[i][0], (1 - t) * y + t * b[i][1]]);
}

export function stampRegionsFor(landmarks: Point[]): Array<{
  classIndex: number;
  polygons: Point[][];
}> {
  if (landmarks.length !== 68) throw new Error("face stamp needs 68 landmarks");
  return FACE_REGIONS.map((region) => ({
    classIndex: region.classIndex,
    polygons: region.pointGroups.map((group) => group.map((i) => landmarks[i])),
  }));
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, v));
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}
