/** Capture sets: posed images plus a cloud and a fusion grid spec.
 *
 * Poses come from the trajectory JSON the core package emits (a list of 16
 * row-major floats per camera); intrinsics and file references live in the
 * capture's own JSON.
 */

import * as fs from "fs";
import * as path from "path";

import { ImageContext, buildContext, decodePng } from "./features";
import { Intrinsics, Mat4 } from "./geometry";
import { readPly } from "./ply";

export interface GridSpec {
  bounds: [number[], number[]];
  resolution: [number, number, number];
}

export interface CaptureSet {
  intrinsics: Intrinsics;
  poses: Mat4[];
  images: ImageContext[];
  cloud: Float64Array; // N x 3
  grid: GridSpec;
  scales: number[];
}

export interface CaptureConfig {
  width: number;
  height: number;
  fx: number;
  fy: number;
  cx: number;
  cy: number;
  trajectory: string;
  images: string[];
  cloud: string;
  grid: GridSpec;
  scales: number[];
}

export function loadCapture(configPath: string): CaptureSet {
  const dir = path.dirname(configPath);
  const cfg = JSON.parse(fs.readFileSync(configPath, "utf-8")) as CaptureConfig;
  const poses = JSON.parse(
    fs.readFileSync(path.join(dir, cfg.trajectory), "utf-8"),
  ) as Mat4[];
  if (!Array.isArray(poses) || poses.length === 0) {
    throw new Error("capture needs at least one posed image");
  }
  if (poses.length !== cfg.images.length) {
    throw new Error(
      `pose count ${poses.length} does not match image count ${cfg.images.length}`,
    );
  }
  const images = cfg.images.map((rel) =>
    buildContext(decodePng(fs.readFileSync(path.join(dir, rel)))),
  );
  const cloud = readPly(fs.readFileSync(path.join(dir, cfg.cloud))).points;
  const intrinsics: Intrinsics = {
    fx: cfg.fx, fy: cfg.fy, cx: cfg.cx, cy: cfg.cy,
    width: cfg.width, height: cfg.height,
  };
  for (const img of images) {
    if (img.img.width !== cfg.width || img.img.height !== cfg.height) {
      throw new Error("image dimensions do not match the capture intrinsics");
    }
  }
  return { intrinsics, poses, images, cloud, grid: cfg.grid, scales: cfg.scales };
}
