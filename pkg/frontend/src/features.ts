/** Image access, summed-area tables, crop statistics, and patch descriptors.
 *
 * Crop statistics are O(1) via per-channel integral images (plus squared
 * sums for contrast), which keeps the per-voxel-per-scale-per-view cost flat.
 * Patch descriptors are small local color histograms with an inner/outer
 * split plus gradient-energy bins; their raw dimension (144) deliberately
 * exceeds the 128 grouping dimensions so the PCA compression is real.
 */

import { PNG } from "pngjs";

export interface ImageData {
  width: number;
  height: number;
  /** RGB in [0,1], row-major, 3 floats per pixel */
  rgb: Float64Array;
}

export function decodePng(buf: Buffer): ImageData {
  const png = PNG.sync.read(buf);
  const rgb = new Float64Array(png.width * png.height * 3);
  for (let i = 0; i < png.width * png.height; i++) {
    rgb[3 * i] = png.data[4 * i] / 255;
    rgb[3 * i + 1] = png.data[4 * i + 1] / 255;
    rgb[3 * i + 2] = png.data[4 * i + 2] / 255;
  }
  return { width: png.width, height: png.height, rgb };
}

export function encodePng(img: ImageData): Buffer {
  const png = new PNG({ width: img.width, height: img.height });
  for (let i = 0; i < img.width * img.height; i++) {
    png.data[4 * i] = Math.round(Math.min(1, Math.max(0, img.rgb[3 * i])) * 255);
    png.data[4 * i + 1] = Math.round(Math.min(1, Math.max(0, img.rgb[3 * i + 1])) * 255);
    png.data[4 * i + 2] = Math.round(Math.min(1, Math.max(0, img.rgb[3 * i + 2])) * 255);
    png.data[4 * i + 3] = 255;
  }
  return PNG.sync.write(png);
}

export interface ImageContext {
  img: ImageData;
  /** integral images: sums[c] and squared sums[c+3], each (h+1) x (w+1) */
  sat: Float64Array[];
}

export function buildContext(img: ImageData): ImageContext {
  const { width: w, height: h, rgb } = img;
  const sat: Float64Array[] = [];
  for (let c = 0; c < 6; c++) sat.push(new Float64Array((w + 1) * (h + 1)));
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      for (let c = 0; c < 3; c++) {
        const val = rgb[3 * (y * w + x) + c];
        for (const [ci, vv] of [[c, val], [c + 3, val * val]] as const) {
          sat[ci][(y + 1) * (w + 1) + (x + 1)] =
            vv
            + sat[ci][y * (w + 1) + (x + 1)]
            + sat[ci][(y + 1) * (w + 1) + x]
            - sat[ci][y * (w + 1) + x];
        }
      }
    }
  }
  return { img, sat };
}

export interface CropStats {
  mean: [number, number, number];
  std: number; // pooled luminance contrast
  area: number;
}

/** Mean color and contrast of the crop clipped to the image, in O(1). */
export function cropStats(ctx: ImageContext, cu: number, cv: number,
                          side: number): CropStats {
  const w = ctx.img.width;
  const h = ctx.img.height;
  const half = side / 2;
  const x0 = Math.max(0, Math.round(cu - half));
  const y0 = Math.max(0, Math.round(cv - half));
  const x1 = Math.min(w, Math.round(cu + half));
  const y1 = Math.min(h, Math.round(cv + half));
  const area = Math.max(1, (x1 - x0) * (y1 - y0));
  const rect = (s: Float64Array) =>
    s[y1 * (w + 1) + x1] - s[y0 * (w + 1) + x1]
    - s[y1 * (w + 1) + x0] + s[y0 * (w + 1) + x0];
  const mean: [number, number, number] = [
    rect(ctx.sat[0]) / area, rect(ctx.sat[1]) / area, rect(ctx.sat[2]) / area,
  ];
  let variance = 0;
  for (let c = 0; c < 3; c++) {
    variance += Math.max(0, rect(ctx.sat[c + 3]) / area - mean[c] * mean[c]);
  }
  return { mean, std: Math.sqrt(variance / 3), area };
}

export const PATCH_DESCRIPTOR_DIM = 144;

/** Local grouping descriptor: 4x4x4 RGB histograms over an inner window and
 * its surrounding ring, plus 16 gradient-energy bins. */
export function patchDescriptor(img: ImageData, cu: number, cv: number,
                                radius = 7): Float64Array {
  const out = new Float64Array(PATCH_DESCRIPTOR_DIM);
  const w = img.width;
  const h = img.height;
  const u0 = Math.round(cu);
  const v0 = Math.round(cv);
  const inner = Math.floor(radius / 2);
  let nInner = 0;
  let nOuter = 0;
  for (let dv = -radius; dv <= radius; dv++) {
    const y = v0 + dv;
    if (y < 0 || y >= h) continue;
    for (let du = -radius; du <= radius; du++) {
      const x = u0 + du;
      if (x < 0 || x >= w) continue;
      const i = 3 * (y * w + x);
      const rb = Math.min(3, Math.floor(img.rgb[i] * 4));
      const gb = Math.min(3, Math.floor(img.rgb[i + 1] * 4));
      const bb = Math.min(3, Math.floor(img.rgb[i + 2] * 4));
      const bin = (rb * 4 + gb) * 4 + bb;
      if (Math.max(Math.abs(du), Math.abs(dv)) <= inner) {
        out[bin] += 1;
        nInner += 1;
      } else {
        out[64 + bin] += 1;
        nOuter += 1;
      }
      // gradient energy by octant of the local finite difference
      if (x + 1 < w && y + 1 < h) {
        const lum = (o: number) =>
          (img.rgb[o] + img.rgb[o + 1] + img.rgb[o + 2]) / 3;
        const gx = lum(3 * (y * w + x + 1)) - lum(i);
        const gy = lum(3 * ((y + 1) * w + x)) - lum(i);
        const mag = Math.hypot(gx, gy);
        if (mag > 1e-6) {
          const oct = Math.floor(((Math.atan2(gy, gx) + Math.PI) / (2 * Math.PI)) * 8) % 8;
          const ring = Math.max(Math.abs(du), Math.abs(dv)) <= inner ? 0 : 1;
          out[128 + ring * 8 + oct] += mag;
        }
      }
    }
  }
  for (let b = 0; b < 64; b++) out[b] /= Math.max(1, nInner);
  for (let b = 64; b < 128; b++) out[b] /= Math.max(1, nOuter);
  return out;
}
