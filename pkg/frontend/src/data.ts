/** Synthetic 10-class 32x32 RGB dataset.
 *
 * CIFAR-10 itself is not bundled, so training and integration runs use
 * procedurally generated scenes that keep its label vocabulary. Each
 * class pairs a hue with a simple structure (stripes, disk, gradient,
 * checker) plus noise, which a small CNN separates cleanly while still
 * needing more than channel means.
 */

import { Rgb } from "./png";
import { mulberry32, gaussian, Rng } from "./rng";

export const LABELS = [
  "airplane",
  "automobile",
  "bird",
  "cat",
  "deer",
  "dog",
  "frog",
  "horse",
  "ship",
  "truck",
] as const;

export const IMAGE_SIDE = 32;

/** Class hue anchors on a simple RGB wheel, 0..1 -> rgb in 0..255. */
function wheel(t: number): [number, number, number] {
  const angle = 2 * Math.PI * t;
  const r = 150 + 100 * Math.cos(angle);
  const g = 150 + 100 * Math.cos(angle - (2 * Math.PI) / 3);
  const b = 150 + 100 * Math.cos(angle - (4 * Math.PI) / 3);
  return [r, g, b];
}

function structure(cls: number, x: number, y: number, phase: number): number {
  const cx = x / (IMAGE_SIDE - 1);
  const cy = y / (IMAGE_SIDE - 1);
  switch (cls % 5) {
    case 0: // horizontal stripes
      return Math.sin(2 * Math.PI * (3 * cy + phase));
    case 1: // vertical stripes
      return Math.sin(2 * Math.PI * (3 * cx + phase));
    case 2: // centered disk
      return Math.hypot(cx - 0.5, cy - 0.5) < 0.3 + 0.1 * phase ? 1 : -1;
    case 3: // diagonal gradient
      return cx + cy - 1 + 0.4 * phase;
    default: // checker
      return (Math.floor(4 * cx + phase) + Math.floor(4 * cy)) % 2 === 0 ? 1 : -1;
  }
}

export function makeSample(cls: number, rng: Rng): Rgb {
  const n = IMAGE_SIDE * IMAGE_SIDE;
  const planes = [new Float64Array(n), new Float64Array(n), new Float64Array(n)];
  const [r, g, b] = wheel(cls / LABELS.length);
  const base = [r, g, b];
  const phase = rng();
  // classes 0..4 modulate brightness with the structure, 5..9 swap the
  // structure into the opposite channel mix so hue alone is not enough
  const swap = cls >= 5;
  const amp = 45 + 20 * rng();
  for (let y = 0; y < IMAGE_SIDE; y++) {
    for (let x = 0; x < IMAGE_SIDE; x++) {
      const i = y * IMAGE_SIDE + x;
      const s = structure(cls, x, y, phase);
      for (let c = 0; c < 3; c++) {
        const sign = swap && c === 1 ? -1 : 1;
        const v = base[c] + sign * amp * s + 8 * gaussian(rng);
        planes[c][i] = Math.max(0, Math.min(255, v));
      }
    }
  }
  return { width: IMAGE_SIDE, height: IMAGE_SIDE, planes };
}

export interface Dataset {
  /** normalized to 0..1, NHWC order */
  images: Float32Array;
  labels: Int32Array;
  count: number;
}

export function makeDataset(perClass: number, seed: number): Dataset {
  const rng = mulberry32(seed);
  const count = perClass * LABELS.length;
  const images = new Float32Array(count * IMAGE_SIDE * IMAGE_SIDE * 3);
  const labels = new Int32Array(count);
  // interleave classes so minibatches stay balanced without shuffling
  for (let i = 0; i < count; i++) {
    const cls = i % LABELS.length;
    const img = makeSample(cls, rng);
    const off = i * IMAGE_SIDE * IMAGE_SIDE * 3;
    for (let p = 0; p < IMAGE_SIDE * IMAGE_SIDE; p++) {
      images[off + 3 * p] = img.planes[0][p] / 255;
      images[off + 3 * p + 1] = img.planes[1][p] / 255;
      images[off + 3 * p + 2] = img.planes[2][p] / 255;
    }
    labels[i] = cls;
  }
  return { images, labels, count };
}
