/** LFLD binary writer (and a validating reader used by the tests).
 *
 * Layout (little-endian): magic "LFLD" | version u32 = 1 | d_lang u32 |
 * d_group u32 | S u32 | nx, ny, nz u32 | bounds 6 x f32 | scales S x f32 |
 * lang payload S*nx*ny*nz*d_lang f16 | group payload nx*ny*nz*d_group f16.
 * Voxel order: z fastest, then y, then x; scale slowest for lang.
 */

export const LFLD_MAGIC = 0x444c464c; // "LFLD" read as LE u32
export const LFLD_VERSION = 1;

/** IEEE 754 binary32 -> binary16 with round-to-nearest-even. */
export function f32ToF16Bits(value: number): number {
  const f32 = new Float32Array(1);
  const u32 = new Uint32Array(f32.buffer);
  f32[0] = value;
  const x = u32[0];
  const sign = (x >>> 16) & 0x8000;
  const exp = (x >>> 23) & 0xff;
  let mant = x & 0x7fffff;
  if (exp === 0xff) return sign | 0x7c00 | (mant ? 0x200 : 0);
  const e = exp - 127 + 15;
  if (e >= 0x1f) return sign | 0x7c00;
  if (e <= 0) {
    if (e < -10) return sign;
    mant |= 0x800000;
    const shift = 14 - e;
    let half = mant >>> shift;
    const rem = mant & ((1 << shift) - 1);
    const halfway = 1 << (shift - 1);
    if (rem > halfway || (rem === halfway && (half & 1))) half += 1;
    return sign | half;
  }
  let half = (e << 10) | (mant >>> 13);
  const rem = mant & 0x1fff;
  if (rem > 0x1000 || (rem === 0x1000 && (half & 1))) half += 1;
  return sign | half;
}

export function f16BitsToF32(bits: number): number {
  const sign = bits & 0x8000 ? -1 : 1;
  const exp = (bits >>> 10) & 0x1f;
  const mant = bits & 0x3ff;
  if (exp === 0) return sign * mant * Math.pow(2, -24);
  if (exp === 0x1f) return mant ? NaN : sign * Infinity;
  return sign * (1 + mant / 1024) * Math.pow(2, exp - 15);
}

export interface LfldContent {
  dLang: number;
  dGroup: number;
  scales: number[];
  resolution: [number, number, number];
  bounds: [number[], number[]]; // [min xyz, max xyz]
  /** lang[s][vox][d] flattened: s * nVox * dLang, voxel index = (ix*ny+iy)*nz+iz */
  lang: Float64Array;
  group: Float64Array;
}

export function writeLfld(content: LfldContent): Buffer {
  const [nx, ny, nz] = content.resolution;
  const nVox = nx * ny * nz;
  const s = content.scales.length;
  const nLang = s * nVox * content.dLang;
  const nGroup = nVox * content.dGroup;
  if (content.lang.length !== nLang || content.group.length !== nGroup) {
    throw new Error("payload size disagrees with header dimensions");
  }
  const headerBytes = 8 * 4 + 6 * 4 + s * 4;
  const buf = Buffer.alloc(headerBytes + 2 * (nLang + nGroup));
  let off = 0;
  buf.writeUInt32LE(LFLD_MAGIC, off); off += 4;
  buf.writeUInt32LE(LFLD_VERSION, off); off += 4;
  buf.writeUInt32LE(content.dLang, off); off += 4;
  buf.writeUInt32LE(content.dGroup, off); off += 4;
  buf.writeUInt32LE(s, off); off += 4;
  buf.writeUInt32LE(nx, off); off += 4;
  buf.writeUInt32LE(ny, off); off += 4;
  buf.writeUInt32LE(nz, off); off += 4;
  for (const v of [...content.bounds[0], ...content.bounds[1]]) {
    buf.writeFloatLE(v, off); off += 4;
  }
  for (const v of content.scales) {
    buf.writeFloatLE(v, off); off += 4;
  }
  for (let i = 0; i < nLang; i++) {
    buf.writeUInt16LE(f32ToF16Bits(content.lang[i]), off); off += 2;
  }
  for (let i = 0; i < nGroup; i++) {
    buf.writeUInt16LE(f32ToF16Bits(content.group[i]), off); off += 2;
  }
  return buf;
}

export interface LfldValidation {
  dLang: number;
  dGroup: number;
  scales: number[];
  resolution: [number, number, number];
  nOccupied: number;
  /** worst |norm - 1| over occupied lang and group embeddings */
  maxNormError: number;
  violations: string[];
}

/** Reader used by the tests: checks every load-time invariant the core enforces. */
export function validateLfld(buf: Buffer): LfldValidation {
  const violations: string[] = [];
  if (buf.length < 32) throw new Error("file shorter than LFLD header");
  if (buf.readUInt32LE(0) !== LFLD_MAGIC) violations.push("bad magic");
  if (buf.readUInt32LE(4) !== LFLD_VERSION) violations.push("bad version");
  const dLang = buf.readUInt32LE(8);
  const dGroup = buf.readUInt32LE(12);
  const s = buf.readUInt32LE(16);
  const nx = buf.readUInt32LE(20);
  const ny = buf.readUInt32LE(24);
  const nz = buf.readUInt32LE(28);
  if (Math.min(dLang, dGroup, s, nx, ny, nz) < 1) violations.push("zero dimension");
  let off = 32;
  const bounds: number[] = [];
  for (let i = 0; i < 6; i++) { bounds.push(buf.readFloatLE(off)); off += 4; }
  for (let a = 0; a < 3; a++) {
    if (!(bounds[3 + a] > bounds[a])) violations.push("non-positive bounds extent");
  }
  const scales: number[] = [];
  for (let i = 0; i < s; i++) { scales.push(buf.readFloatLE(off)); off += 4; }
  for (let i = 0; i < s; i++) {
    if (scales[i] <= 0 || (i > 0 && scales[i] <= scales[i - 1])) {
      violations.push("scales not strictly increasing");
      break;
    }
  }
  const nVox = nx * ny * nz;
  const expected = off + 2 * (s * nVox * dLang + nVox * dGroup);
  if (buf.length !== expected) {
    violations.push(`payload length ${buf.length - off}, expected ${expected - off}`);
    return { dLang, dGroup, scales, resolution: [nx, ny, nz], nOccupied: 0, maxNormError: Infinity, violations };
  }
  const langOff = off;
  const groupOff = off + 2 * s * nVox * dLang;
  let nOccupied = 0;
  let maxErr = 0;
  for (let v = 0; v < nVox; v++) {
    let g2 = 0;
    for (let d = 0; d < dGroup; d++) {
      const val = f16BitsToF32(buf.readUInt16LE(groupOff + 2 * (v * dGroup + d)));
      g2 += val * val;
    }
    const gn = Math.sqrt(g2);
    if (gn <= 1e-6) {
      // unoccupied: language must be the zero in-band marker at every scale
      for (let si = 0; si < s; si++) {
        for (let d = 0; d < dLang; d++) {
          const val = f16BitsToF32(buf.readUInt16LE(langOff + 2 * ((si * nVox + v) * dLang + d)));
          if (val !== 0) { violations.push(`nonzero lang at unoccupied voxel ${v}`); break; }
        }
      }
      continue;
    }
    nOccupied += 1;
    maxErr = Math.max(maxErr, Math.abs(gn - 1));
    for (let si = 0; si < s; si++) {
      let l2 = 0;
      for (let d = 0; d < dLang; d++) {
        const val = f16BitsToF32(buf.readUInt16LE(langOff + 2 * ((si * nVox + v) * dLang + d)));
        l2 += val * val;
      }
      maxErr = Math.max(maxErr, Math.abs(Math.sqrt(l2) - 1));
    }
  }
  if (maxErr > 1e-3) violations.push(`embedding norm error ${maxErr} exceeds 1e-3`);
  return { dLang, dGroup, scales, resolution: [nx, ny, nz], nOccupied, maxNormError: maxErr, violations };
}
