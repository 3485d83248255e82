/** Embedding providers mapping image crops and text phrases into one space.
 *
 * The built-in provider is deterministic and hermetic: an 8-dim color
 * descriptor (opponent channels, brightness, contrast, and a small shared
 * constant) lifted into d_lang dimensions by a fixed orthonormal matrix, so
 * cosine similarities in the lifted space equal descriptor cosines. Text
 * phrases embed via a color lexicon; words outside the lexicon fall back to
 * a neutral prototype, which also anchors the canonical negatives.
 *
 * A real CLIP/DINO backend plugs in by implementing EmbeddingProvider and
 * registering it in createProvider; unknown specs raise ModelLoadFailure.
 */

import { CropStats } from "./features";
import { normalize } from "./geometry";

export class ModelLoadFailure extends Error {}

export const D_LANG = 64;
const DESCRIPTOR_DIM = 8;

export interface EmbeddingProvider {
  readonly dim: number;
  embedCrop(stats: CropStats): Float64Array;
  embedText(phrase: string): Float64Array;
}

/** Deterministic PRNG (mulberry32) for the fixed lifting matrix. */
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

function orthonormalLift(rows: number, cols: number, seed: number): Float64Array {
  // Gram-Schmidt over seeded Gaussian columns: lift^T lift = I_cols
  const rand = mulberry32(seed);
  const gauss = () => {
    const u = Math.max(rand(), 1e-12);
    const v = rand();
    return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
  };
  const colsArr: Float64Array[] = [];
  for (let c = 0; c < cols; c++) {
    const col = new Float64Array(rows);
    for (let r = 0; r < rows; r++) col[r] = gauss();
    for (const prev of colsArr) {
      let d = 0;
      for (let r = 0; r < rows; r++) d += col[r] * prev[r];
      for (let r = 0; r < rows; r++) col[r] -= d * prev[r];
    }
    let n = 0;
    for (let r = 0; r < rows; r++) n += col[r] * col[r];
    n = Math.sqrt(n);
    for (let r = 0; r < rows; r++) col[r] /= n;
    colsArr.push(col);
  }
  const lift = new Float64Array(rows * cols);
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) lift[r * cols + c] = colsArr[c][r];
  }
  return lift;
}

function colorDescriptor(mean: [number, number, number], std: number): Float64Array {
  const [r, g, b] = mean;
  const lum = (r + g + b) / 3;
  return new Float64Array([
    r - g,
    (r + g) / 2 - b,
    lum - 0.5,
    std,
    r - lum,
    g - lum,
    b - lum,
    0.2, // shared mass so all embeddings carry a common component
  ]);
}

/** Render colors double as the lexicon's color prototypes. */
export const LEXICON: Record<string, [number, number, number]> = {
  red: [0.85, 0.12, 0.1],
  blue: [0.1, 0.2, 0.9],
  green: [0.1, 0.75, 0.2],
  gray: [0.72, 0.72, 0.72],
  grey: [0.72, 0.72, 0.72],
  white: [0.95, 0.95, 0.95],
  black: [0.08, 0.08, 0.08],
};

const NEUTRAL: [number, number, number] = [0.5, 0.5, 0.5];

export class BuiltinEmbedder implements EmbeddingProvider {
  readonly dim = D_LANG;
  private lift = orthonormalLift(D_LANG, DESCRIPTOR_DIM, 0x5eed);

  private liftDescriptor(desc: Float64Array): Float64Array {
    const out = new Float64Array(this.dim);
    for (let r = 0; r < this.dim; r++) {
      let s = 0;
      for (let c = 0; c < DESCRIPTOR_DIM; c++) {
        s += this.lift[r * DESCRIPTOR_DIM + c] * desc[c];
      }
      out[r] = s;
    }
    return normalize(out);
  }

  embedCrop(stats: CropStats): Float64Array {
    return this.liftDescriptor(colorDescriptor(stats.mean, stats.std));
  }

  embedText(phrase: string): Float64Array {
    const words = phrase.toLowerCase().split(/\s+/).filter(Boolean);
    const acc = new Float64Array(DESCRIPTOR_DIM);
    let n = 0;
    for (const word of words) {
      const color = LEXICON[word] ?? NEUTRAL;
      const d = colorDescriptor(color, 0);
      for (let i = 0; i < DESCRIPTOR_DIM; i++) acc[i] += d[i];
      n += 1;
    }
    if (n === 0) {
      acc.set(colorDescriptor(NEUTRAL, 0));
      n = 1;
    }
    for (let i = 0; i < DESCRIPTOR_DIM; i++) acc[i] /= n;
    return this.liftDescriptor(acc);
  }
}

export function createProvider(spec: string): EmbeddingProvider {
  if (spec === "builtin") return new BuiltinEmbedder();
  throw new ModelLoadFailure(
    `unknown embedding provider '${spec}' (register a real backend here)`,
  );
}
