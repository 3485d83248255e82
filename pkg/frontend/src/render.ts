/** Demo capture generator: a flat-shaded raycast of a red cube and a blue
 * ball on a gray table, rendered from core-emitted trajectory poses, plus
 * the matching surface cloud and hand-annotated object boxes. */

import { ImageData } from "./features";
import { Intrinsics, Mat4, Vec3, cameraToWorld, poseTranslation } from "./geometry";

export const TABLE_COLOR: Vec3 = [0.72, 0.72, 0.72];
export const CUBE_COLOR: Vec3 = [0.85, 0.12, 0.1];
export const BALL_COLOR: Vec3 = [0.1, 0.2, 0.9];
export const BACKGROUND: Vec3 = [0.15, 0.15, 0.15];

export const TABLE_HALF = 0.25;
export const CUBE_CENTER: Vec3 = [-0.08, 0.0, 0.03];
export const CUBE_HALF = 0.03;
export const BALL_CENTER: Vec3 = [0.09, 0.02, 0.035];
export const BALL_RADIUS = 0.035;

const LIGHT: Vec3 = (() => {
  const l: Vec3 = [0.3, 0.2, 0.9];
  const n = Math.hypot(...l);
  return [l[0] / n, l[1] / n, l[2] / n];
})();

interface Hit {
  t: number;
  color: Vec3;
  normal: Vec3;
}

function intersectPlane(origin: Vec3, dir: Vec3): Hit | null {
  if (Math.abs(dir[2]) < 1e-9) return null;
  const t = -origin[2] / dir[2];
  if (t <= 0) return null;
  const x = origin[0] + t * dir[0];
  const y = origin[1] + t * dir[1];
  if (Math.abs(x) > TABLE_HALF || Math.abs(y) > TABLE_HALF) return null;
  return { t, color: TABLE_COLOR, normal: [0, 0, 1] };
}

function intersectBox(origin: Vec3, dir: Vec3): Hit | null {
  let tmin = -Infinity;
  let tmax = Infinity;
  let axis = 0;
  for (let a = 0; a < 3; a++) {
    const lo = CUBE_CENTER[a] - CUBE_HALF;
    const hi = CUBE_CENTER[a] + CUBE_HALF;
    if (Math.abs(dir[a]) < 1e-12) {
      if (origin[a] < lo || origin[a] > hi) return null;
      continue;
    }
    let t0 = (lo - origin[a]) / dir[a];
    let t1 = (hi - origin[a]) / dir[a];
    if (t0 > t1) [t0, t1] = [t1, t0];
    if (t0 > tmin) {
      tmin = t0;
      axis = a;
    }
    tmax = Math.min(tmax, t1);
    if (tmin > tmax) return null;
  }
  if (tmin <= 0) return null;
  const normal: Vec3 = [0, 0, 0];
  normal[axis] = Math.sign(origin[axis] - CUBE_CENTER[axis]) || 1;
  return { t: tmin, color: CUBE_COLOR, normal };
}

function intersectSphere(origin: Vec3, dir: Vec3): Hit | null {
  const oc: Vec3 = [
    origin[0] - BALL_CENTER[0],
    origin[1] - BALL_CENTER[1],
    origin[2] - BALL_CENTER[2],
  ];
  const a = dir[0] ** 2 + dir[1] ** 2 + dir[2] ** 2;
  const b = 2 * (oc[0] * dir[0] + oc[1] * dir[1] + oc[2] * dir[2]);
  const c = oc[0] ** 2 + oc[1] ** 2 + oc[2] ** 2 - BALL_RADIUS ** 2;
  const disc = b * b - 4 * a * c;
  if (disc < 0) return null;
  const t = (-b - Math.sqrt(disc)) / (2 * a);
  if (t <= 0) return null;
  const p: Vec3 = [
    origin[0] + t * dir[0],
    origin[1] + t * dir[1],
    origin[2] + t * dir[2],
  ];
  const normal: Vec3 = [
    (p[0] - BALL_CENTER[0]) / BALL_RADIUS,
    (p[1] - BALL_CENTER[1]) / BALL_RADIUS,
    (p[2] - BALL_CENTER[2]) / BALL_RADIUS,
  ];
  return { t, color: BALL_COLOR, normal };
}

export function renderView(pose: Mat4, intr: Intrinsics): ImageData {
  const rgb = new Float64Array(intr.width * intr.height * 3);
  const origin = poseTranslation(pose);
  for (let v = 0; v < intr.height; v++) {
    for (let u = 0; u < intr.width; u++) {
      const dirCam: Vec3 = [(u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1];
      const tip = cameraToWorld(pose, dirCam);
      const dir: Vec3 = [tip[0] - origin[0], tip[1] - origin[1], tip[2] - origin[2]];
      let best: Hit | null = null;
      for (const hit of [intersectPlane(origin, dir), intersectBox(origin, dir),
                         intersectSphere(origin, dir)]) {
        if (hit && (!best || hit.t < best.t)) best = hit;
      }
      const i = 3 * (v * intr.width + u);
      if (!best) {
        rgb[i] = BACKGROUND[0];
        rgb[i + 1] = BACKGROUND[1];
        rgb[i + 2] = BACKGROUND[2];
        continue;
      }
      const lambert = Math.max(0, best.normal[0] * LIGHT[0]
        + best.normal[1] * LIGHT[1] + best.normal[2] * LIGHT[2]);
      const shade = 0.65 + 0.35 * lambert;
      rgb[i] = best.color[0] * shade;
      rgb[i + 1] = best.color[1] * shade;
      rgb[i + 2] = best.color[2] * shade;
    }
  }
  return { width: intr.width, height: intr.height, rgb };
}

/** Analytic surface samples of the demo scene (table, cube faces, sphere). */
export function sampleSceneCloud(): Float64Array {
  const pts: number[] = [];
  const push = (p: Vec3) => pts.push(p[0], p[1], p[2]);
  const tableStep = 0.008;
  for (let x = -TABLE_HALF; x <= TABLE_HALF; x += tableStep) {
    for (let y = -TABLE_HALF; y <= TABLE_HALF; y += tableStep) {
      push([x, y, 0]);
    }
  }
  const cubeStep = 0.005;
  for (let a = -CUBE_HALF; a <= CUBE_HALF + 1e-9; a += cubeStep) {
    for (let b = -CUBE_HALF; b <= CUBE_HALF + 1e-9; b += cubeStep) {
      push([CUBE_CENTER[0] + a, CUBE_CENTER[1] + b, CUBE_CENTER[2] + CUBE_HALF]);
      push([CUBE_CENTER[0] + a, CUBE_CENTER[1] - CUBE_HALF, CUBE_CENTER[2] + b]);
      push([CUBE_CENTER[0] + a, CUBE_CENTER[1] + CUBE_HALF, CUBE_CENTER[2] + b]);
      push([CUBE_CENTER[0] - CUBE_HALF, CUBE_CENTER[1] + a, CUBE_CENTER[2] + b]);
      push([CUBE_CENTER[0] + CUBE_HALF, CUBE_CENTER[1] + a, CUBE_CENTER[2] + b]);
    }
  }
  // fibonacci sphere
  const n = 1500;
  const golden = Math.PI * (3 - Math.sqrt(5));
  for (let i = 0; i < n; i++) {
    const z = 1 - (2 * i + 1) / n;
    const r = Math.sqrt(Math.max(0, 1 - z * z));
    const th = golden * i;
    push([
      BALL_CENTER[0] + BALL_RADIUS * r * Math.cos(th),
      BALL_CENTER[1] + BALL_RADIUS * r * Math.sin(th),
      BALL_CENTER[2] + BALL_RADIUS * z,
    ]);
  }
  return Float64Array.from(pts);
}

/** Hand-tuned annotation boxes: geometric AABBs plus a 1.5 cm margin. */
export function annotations(): Record<string, [number[], number[]]> {
  const m = 0.015;
  return {
    "red cube": [
      [CUBE_CENTER[0] - CUBE_HALF - m, CUBE_CENTER[1] - CUBE_HALF - m, -m],
      [CUBE_CENTER[0] + CUBE_HALF + m, CUBE_CENTER[1] + CUBE_HALF + m,
       CUBE_CENTER[2] + CUBE_HALF + m],
    ],
    "blue ball": [
      [BALL_CENTER[0] - BALL_RADIUS - m, BALL_CENTER[1] - BALL_RADIUS - m, -m],
      [BALL_CENTER[0] + BALL_RADIUS + m, BALL_CENTER[1] + BALL_RADIUS + m,
       BALL_CENTER[2] + BALL_RADIUS + m],
    ],
  };
}
