/** Minimal rigid-transform and pinhole-projection helpers.
 *
 * Poses are 4x4 camera-to-world matrices stored row-major as number[16],
 * matching the trajectory JSON emitted by the core package. Cameras follow
 * the OpenCV convention (+x right, +y down, +z forward).
 */

export type Mat4 = number[]; // 16 entries, row-major
export type Vec3 = [number, number, number];

export interface Intrinsics {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  width: number;
  height: number;
}

export function poseTranslation(pose: Mat4): Vec3 {
  return [pose[3], pose[7], pose[11]];
}

/** World point into the camera frame: p_c = R^T (p - t). */
export function worldToCamera(pose: Mat4, p: Vec3): Vec3 {
  const dx = p[0] - pose[3];
  const dy = p[1] - pose[7];
  const dz = p[2] - pose[11];
  return [
    pose[0] * dx + pose[4] * dy + pose[8] * dz,
    pose[1] * dx + pose[5] * dy + pose[9] * dz,
    pose[2] * dx + pose[6] * dy + pose[10] * dz,
  ];
}

export function cameraToWorld(pose: Mat4, p: Vec3): Vec3 {
  return [
    pose[0] * p[0] + pose[1] * p[1] + pose[2] * p[2] + pose[3],
    pose[4] * p[0] + pose[5] * p[1] + pose[6] * p[2] + pose[7],
    pose[8] * p[0] + pose[9] * p[1] + pose[10] * p[2] + pose[11],
  ];
}

export interface Projection {
  u: number;
  v: number;
  z: number; // camera-frame depth
}

/** Pinhole projection; null when behind the camera or outside the image. */
export function projectPoint(
  pose: Mat4,
  intr: Intrinsics,
  p: Vec3,
  minZ = 0.05,
): Projection | null {
  const cam = worldToCamera(pose, p);
  if (cam[2] < minZ) return null;
  const u = (intr.fx * cam[0]) / cam[2] + intr.cx;
  const v = (intr.fy * cam[1]) / cam[2] + intr.cy;
  if (u < 0 || v < 0 || u >= intr.width || v >= intr.height) return null;
  return { u, v, z: cam[2] };
}

export function norm(v: ArrayLike<number>): number {
  let s = 0;
  for (let i = 0; i < v.length; i++) s += v[i] * v[i];
  return Math.sqrt(s);
}

export function normalize(v: Float64Array): Float64Array {
  const n = norm(v);
  if (n === 0) throw new Error("cannot normalize zero vector");
  const out = new Float64Array(v.length);
  for (let i = 0; i < v.length; i++) out[i] = v[i] / n;
  return out;
}

export function dot(a: ArrayLike<number>, b: ArrayLike<number>): number {
  let s = 0;
  for (let i = 0; i < a.length; i++) s += a[i] * b[i];
  return s;
}
