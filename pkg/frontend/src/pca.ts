/** PCA via cyclic Jacobi eigendecomposition of the covariance matrix.
 * Dimensions here are small (<= a few hundred), so Jacobi is plenty. */

export interface PcaModel {
  mean: Float64Array;
  components: Float64Array; // k x dim, row-major, orthonormal rows
  k: number;
  dim: number;
  /** fraction of total variance captured by the k components */
  varianceRatio: number;
}

function jacobiEigh(a: Float64Array, n: number): { values: Float64Array; vectors: Float64Array } {
  // a is n x n symmetric (row-major), destroyed in place
  const v = new Float64Array(n * n);
  for (let i = 0; i < n; i++) v[i * n + i] = 1;
  for (let sweep = 0; sweep < 100; sweep++) {
    let off = 0;
    for (let p = 0; p < n; p++) {
      for (let q = p + 1; q < n; q++) off += a[p * n + q] * a[p * n + q];
    }
    if (off < 1e-22) break;
    for (let p = 0; p < n; p++) {
      for (let q = p + 1; q < n; q++) {
        const apq = a[p * n + q];
        if (Math.abs(apq) < 1e-300) continue;
        const app = a[p * n + p];
        const aqq = a[q * n + q];
        const theta = (aqq - app) / (2 * apq);
        const t = Math.sign(theta || 1) / (Math.abs(theta) + Math.sqrt(theta * theta + 1));
        const c = 1 / Math.sqrt(t * t + 1);
        const s = t * c;
        for (let i = 0; i < n; i++) {
          const aip = a[i * n + p];
          const aiq = a[i * n + q];
          a[i * n + p] = c * aip - s * aiq;
          a[i * n + q] = s * aip + c * aiq;
        }
        for (let i = 0; i < n; i++) {
          const api = a[p * n + i];
          const aqi = a[q * n + i];
          a[p * n + i] = c * api - s * aqi;
          a[q * n + i] = s * api + c * aqi;
        }
        for (let i = 0; i < n; i++) {
          const vip = v[i * n + p];
          const viq = v[i * n + q];
          v[i * n + p] = c * vip - s * viq;
          v[i * n + q] = s * vip + c * viq;
        }
      }
    }
  }
  const values = new Float64Array(n);
  for (let i = 0; i < n; i++) values[i] = a[i * n + i];
  return { values, vectors: v };
}

/** Fit a PCA of k components on row-major samples (nSamples x dim). */
export function fitPca(samples: Float64Array, nSamples: number, dim: number,
                       k: number): PcaModel {
  if (nSamples < 2) throw new Error("PCA needs at least 2 samples");
  k = Math.min(k, dim);
  const mean = new Float64Array(dim);
  for (let i = 0; i < nSamples; i++) {
    for (let d = 0; d < dim; d++) mean[d] += samples[i * dim + d];
  }
  for (let d = 0; d < dim; d++) mean[d] /= nSamples;

  const cov = new Float64Array(dim * dim);
  const row = new Float64Array(dim);
  for (let i = 0; i < nSamples; i++) {
    for (let d = 0; d < dim; d++) row[d] = samples[i * dim + d] - mean[d];
    for (let p = 0; p < dim; p++) {
      const rp = row[p];
      if (rp === 0) continue;
      for (let q = p; q < dim; q++) cov[p * dim + q] += rp * row[q];
    }
  }
  for (let p = 0; p < dim; p++) {
    for (let q = p; q < dim; q++) {
      const val = cov[p * dim + q] / (nSamples - 1);
      cov[p * dim + q] = val;
      cov[q * dim + p] = val;
    }
  }

  const { values, vectors } = jacobiEigh(cov, dim);
  const order = Array.from({ length: dim }, (_, i) => i)
    .sort((a, b) => values[b] - values[a]);
  let total = 0;
  for (let i = 0; i < dim; i++) total += Math.max(values[i], 0);
  let kept = 0;
  const components = new Float64Array(k * dim);
  for (let j = 0; j < k; j++) {
    const col = order[j];
    kept += Math.max(values[col], 0);
    // deterministic sign: largest-magnitude loading positive
    let arg = 0;
    for (let d = 1; d < dim; d++) {
      if (Math.abs(vectors[d * dim + col]) > Math.abs(vectors[arg * dim + col])) arg = d;
    }
    const sign = vectors[arg * dim + col] < 0 ? -1 : 1;
    for (let d = 0; d < dim; d++) components[j * dim + d] = sign * vectors[d * dim + col];
  }
  return { mean, components, k, dim, varianceRatio: total > 0 ? kept / total : 1 };
}

export function pcaProject(model: PcaModel, x: ArrayLike<number>): Float64Array {
  const out = new Float64Array(model.k);
  for (let j = 0; j < model.k; j++) {
    let s = 0;
    for (let d = 0; d < model.dim; d++) {
      s += model.components[j * model.dim + d] * (x[d] - model.mean[d]);
    }
    out[j] = s;
  }
  return out;
}
