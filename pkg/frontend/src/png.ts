/** PNG codec plus the little image math the server needs.
 *
 * Images travel as planar float arrays (RGB, row-major, values 0..255)
 * to stay close to the wire format; tensors are built right before
 * inference.
 */

import { PNG } from "pngjs";

export interface Rgb {
  width: number;
  height: number;
  /** 3 planes of width*height floats in 0..255: r, g, b. */
  planes: Float64Array[];
}

export class PngDecodeError extends Error {}

export function decodePng(data: Buffer): Rgb {
  let png: PNG;
  try {
    png = PNG.sync.read(data);
  } catch (err) {
    throw new PngDecodeError(`not a decodable PNG: ${(err as Error).message}`);
  }
  const { width, height } = png;
  const n = width * height;
  const planes = [new Float64Array(n), new Float64Array(n), new Float64Array(n)];
  for (let i = 0; i < n; i++) {
    planes[0][i] = png.data[4 * i];
    planes[1][i] = png.data[4 * i + 1];
    planes[2][i] = png.data[4 * i + 2];
  }
  return { width, height, planes };
}

export function encodePngGray(plane: Float64Array, width: number, height: number): Buffer {
  const png = new PNG({ width, height, colorType: 6 });
  for (let i = 0; i < width * height; i++) {
    const v = Math.max(0, Math.min(255, Math.round(plane[i])));
    png.data[4 * i] = v;
    png.data[4 * i + 1] = v;
    png.data[4 * i + 2] = v;
    png.data[4 * i + 3] = 255;
  }
  return PNG.sync.write(png);
}

export function encodePngRgb(img: Rgb): Buffer {
  const png = new PNG({ width: img.width, height: img.height, colorType: 6 });
  for (let i = 0; i < img.width * img.height; i++) {
    for (let c = 0; c < 3; c++) {
      png.data[4 * i + c] = Math.max(0, Math.min(255, Math.round(img.planes[c][i])));
    }
    png.data[4 * i + 3] = 255;
  }
  return PNG.sync.write(png);
}

/** Bilinear resize with half-pixel centers, one plane. */
function resizePlane(
  src: Float64Array,
  w: number,
  h: number,
  outW: number,
  outH: number,
): Float64Array {
  const out = new Float64Array(outW * outH);
  for (let oy = 0; oy < outH; oy++) {
    const sy = Math.min(Math.max(((oy + 0.5) * h) / outH - 0.5, 0), h - 1);
    const y0 = Math.floor(sy);
    const y1 = Math.min(y0 + 1, h - 1);
    const wy = sy - y0;
    for (let ox = 0; ox < outW; ox++) {
      const sx = Math.min(Math.max(((ox + 0.5) * w) / outW - 0.5, 0), w - 1);
      const x0 = Math.floor(sx);
      const x1 = Math.min(x0 + 1, w - 1);
      const wx = sx - x0;
      const top = src[y0 * w + x0] * (1 - wx) + src[y0 * w + x1] * wx;
      const bot = src[y1 * w + x0] * (1 - wx) + src[y1 * w + x1] * wx;
      out[oy * outW + ox] = top * (1 - wy) + bot * wy;
    }
  }
  return out;
}

export function resizeRgb(img: Rgb, outW: number, outH: number): Rgb {
  if (img.width === outW && img.height === outH) return img;
  return {
    width: outW,
    height: outH,
    planes: img.planes.map((p) => resizePlane(p, img.width, img.height, outW, outH)),
  };
}

/** Min-max rescale a plane to 0..255; a constant plane maps to 0. */
export function rescaleToBytes(plane: Float64Array): Float64Array {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of plane) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  const out = new Float64Array(plane.length);
  if (hi > lo) {
    const scale = 255 / (hi - lo);
    for (let i = 0; i < plane.length; i++) out[i] = (plane[i] - lo) * scale;
  }
  return out;
}
