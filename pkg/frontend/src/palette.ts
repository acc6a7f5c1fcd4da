/** Deterministic class colors: stable across sessions, derived from the
 * class index alone. Class 0 (background) is dark gray. */

export interface Rgb {
  r: number;
  g: number;
  b: number;
}

export function classColor(classIndex: number): Rgb {
  if (classIndex === 0) return { r: 40, g: 40, b: 48 };
  // golden-angle hue walk, fixed saturation/value
  const hue = (classIndex * 137.50776405003785) % 360;
  return hsvToRgb(hue, 0.72, 0.92);
}

export function classColorCss(classIndex: number): string {
  const { r, g, b } = classColor(classIndex);
  return `rgb(${r}, ${g}, ${b})`;
}

function hsvToRgb(h: number, s: number, v: number): Rgb {
  const c = v * s;
  const x = c * (1 - Math.abs(((h / 60) % 2) - 1));
  const m = v - c;
  let r = 0;
  let g = 0;
  let b = 0;
  if (h < 60) [r, g, b] = [c, x, 0];
  else if (h < 120) [r, g, b] = [x, c, 0];
  else if (h < 180) [r, g, b] = [0, c, x];
  else if (h < 240) [r, g, b] = [0, x, c];
  else if (h < 300) [r, g, b] = [x, 0, c];
  else [r, g, b] = [c, 0, x];
  return {
    r: Math.round((r + m) * 255),
    g: Math.round((g + m) * 255),
    b: Math.round((b + m) * 255),
  };
}
