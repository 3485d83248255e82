/** Field export: multi-view fusion of pyramid crop embeddings per scale plus
 * PCA-compressed grouping features, written as LFLD.
 *
 * For every occupied voxel and scale, the voxel center projects into each
 * view; the crop side is scale * focal / depth pixels snapped to a 6-level
 * pyramid spanning 5%..35% of image height; crop embeddings average over the
 * views that see the voxel and renormalize. Voxels visible in no view are
 * skipped and stay unoccupied. Grouping features are view-averaged patch
 * descriptors compressed to 128 dimensions by a PCA fitted on patches drawn
 * from the whole capture.
 */

import { CaptureSet } from "./capture";
import { EmbeddingProvider } from "./embedder";
import { PATCH_DESCRIPTOR_DIM, cropStats, patchDescriptor } from "./features";
import { Vec3, projectPoint } from "./geometry";
import { LfldContent } from "./lfld";
import { PcaModel, fitPca, pcaProject } from "./pca";

export const D_GROUP = 128;
export const PYRAMID_LEVELS = 6;
export const PYRAMID_MIN_FRAC = 0.05;
export const PYRAMID_MAX_FRAC = 0.35;

export interface ExportReport {
  nOccupiedInput: number;
  nOccupiedOutput: number;
  nSkippedNoView: number;
  cropSideMin: number;
  cropSideMax: number;
  cropLevelsUsed: number[];
  pcaVarianceRatio: number;
}

export function pyramidSides(imageHeight: number): number[] {
  const lo = PYRAMID_MIN_FRAC * imageHeight;
  const hi = PYRAMID_MAX_FRAC * imageHeight;
  const sides: number[] = [];
  for (let i = 0; i < PYRAMID_LEVELS; i++) {
    sides.push(lo + ((hi - lo) * i) / (PYRAMID_LEVELS - 1));
  }
  return sides;
}

export function snapToPyramid(side: number, sides: number[]): number {
  let best = 0;
  for (let i = 1; i < sides.length; i++) {
    if (Math.abs(sides[i] - side) < Math.abs(sides[best] - side)) best = i;
  }
  return best;
}

function voxelCenters(capture: CaptureSet): { centers: Vec3[]; index: number[] } {
  const [nx, ny, nz] = capture.grid.resolution;
  const lo = capture.grid.bounds[0];
  const hi = capture.grid.bounds[1];
  const voxel = [(hi[0] - lo[0]) / nx, (hi[1] - lo[1]) / ny, (hi[2] - lo[2]) / nz];
  const occupied = new Set<number>();
  const n = capture.cloud.length / 3;
  for (let i = 0; i < n; i++) {
    const ix = Math.floor((capture.cloud[3 * i] - lo[0]) / voxel[0]);
    const iy = Math.floor((capture.cloud[3 * i + 1] - lo[1]) / voxel[1]);
    const iz = Math.floor((capture.cloud[3 * i + 2] - lo[2]) / voxel[2]);
    if (ix < 0 || iy < 0 || iz < 0 || ix >= nx || iy >= ny || iz >= nz) continue;
    occupied.add((ix * ny + iy) * nz + iz);
  }
  const index = [...occupied].sort((a, b) => a - b);
  const centers = index.map((v): Vec3 => {
    const iz = v % nz;
    const iy = Math.floor(v / nz) % ny;
    const ix = Math.floor(v / (ny * nz));
    return [
      lo[0] + (ix + 0.5) * voxel[0],
      lo[1] + (iy + 0.5) * voxel[1],
      lo[2] + (iz + 0.5) * voxel[2],
    ];
  });
  return { centers, index };
}

/** PCA over patch descriptors sampled on a grid across every view. */
export function fitGroupingPca(capture: CaptureSet, stride = 12): PcaModel {
  const samples: number[] = [];
  let count = 0;
  for (const ctx of capture.images) {
    for (let v = stride; v < ctx.img.height - stride; v += stride) {
      for (let u = stride; u < ctx.img.width - stride; u += stride) {
        const d = patchDescriptor(ctx.img, u, v);
        for (let i = 0; i < d.length; i++) samples.push(d[i]);
        count += 1;
      }
    }
  }
  return fitPca(Float64Array.from(samples), count, PATCH_DESCRIPTOR_DIM, D_GROUP);
}

export function exportField(capture: CaptureSet, provider: EmbeddingProvider):
    { content: LfldContent; report: ExportReport } {
  const [nx, ny, nz] = capture.grid.resolution;
  const nVox = nx * ny * nz;
  const s = capture.scales.length;
  const dLang = provider.dim;
  const lang = new Float64Array(s * nVox * dLang);
  const group = new Float64Array(nVox * D_GROUP);

  const pca = fitGroupingPca(capture);
  const { centers, index } = voxelCenters(capture);
  const sides = pyramidSides(capture.intrinsics.height);
  const levelsUsed = new Set<number>();
  let sideMin = Infinity;
  let sideMax = -Infinity;
  let skipped = 0;
  let written = 0;

  for (let vi = 0; vi < centers.length; vi++) {
    const center = centers[vi];
    const projections = capture.poses.map((pose) =>
      projectPoint(pose, capture.intrinsics, center),
    );
    const visible: number[] = [];
    projections.forEach((p, i) => { if (p) visible.push(i); });
    if (visible.length === 0) {
      skipped += 1; // stays unoccupied (zero vectors)
      continue;
    }

    // language embeddings per scale: snap crop side to the pyramid, average
    for (let si = 0; si < s; si++) {
      const acc = new Float64Array(dLang);
      for (const view of visible) {
        const proj = projections[view]!;
        const ideal = (capture.scales[si] * capture.intrinsics.fy) / proj.z;
        const level = snapToPyramid(ideal, sides);
        const side = sides[level];
        levelsUsed.add(level);
        sideMin = Math.min(sideMin, side);
        sideMax = Math.max(sideMax, side);
        const emb = provider.embedCrop(
          cropStats(capture.images[view], proj.u, proj.v, side),
        );
        for (let d = 0; d < dLang; d++) acc[d] += emb[d];
      }
      let nrm = 0;
      for (let d = 0; d < dLang; d++) nrm += acc[d] * acc[d];
      nrm = Math.sqrt(nrm);
      const base = (si * nVox + index[vi]) * dLang;
      for (let d = 0; d < dLang; d++) lang[base + d] = acc[d] / nrm;
    }

    // grouping: view-averaged patch descriptor compressed by the capture PCA
    const gacc = new Float64Array(PATCH_DESCRIPTOR_DIM);
    for (const view of visible) {
      const proj = projections[view]!;
      const d = patchDescriptor(capture.images[view].img, proj.u, proj.v);
      for (let i = 0; i < d.length; i++) gacc[i] += d[i];
    }
    for (let i = 0; i < gacc.length; i++) gacc[i] /= visible.length;
    const reduced = pcaProject(pca, gacc);
    let gn = 0;
    for (let d = 0; d < D_GROUP; d++) gn += reduced[d] * reduced[d];
    gn = Math.sqrt(gn);
    if (gn < 1e-9) {
      // degenerate grouping projection: drop the voxel entirely
      skipped += 1;
      for (let si = 0; si < s; si++) {
        lang.fill(0, (si * nVox + index[vi]) * dLang,
                  (si * nVox + index[vi]) * dLang + dLang);
      }
      continue;
    }
    const gbase = index[vi] * D_GROUP;
    for (let d = 0; d < D_GROUP; d++) group[gbase + d] = reduced[d] / gn;
    written += 1;
  }

  const content: LfldContent = {
    dLang,
    dGroup: D_GROUP,
    scales: capture.scales,
    resolution: capture.grid.resolution,
    bounds: capture.grid.bounds,
    lang,
    group,
  };
  return {
    content,
    report: {
      nOccupiedInput: centers.length,
      nOccupiedOutput: written,
      nSkippedNoView: skipped,
      cropSideMin: sideMin,
      cropSideMax: sideMax,
      cropLevelsUsed: [...levelsUsed].sort((a, b) => a - b),
      pcaVarianceRatio: pca.varianceRatio,
    },
  };
}

export const CANONICAL_NEGATIVES = ["object", "things", "stuff", "texture"];

/** One unit-norm vector per phrase; canonical negatives are always included
 * so the emitted sidecar satisfies the core's query path on its own. */
export function exportTextSidecar(phrases: string[],
                                  provider: EmbeddingProvider):
    Record<string, number[]> {
  const out: Record<string, number[]> = {};
  for (const phrase of [...phrases, ...CANONICAL_NEGATIVES]) {
    if (phrase in out) continue; // duplicates collapse
    out[phrase] = Array.from(provider.embedText(phrase));
  }
  return out;
}
