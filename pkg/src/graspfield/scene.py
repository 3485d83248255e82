"""Depth deprojection, point clouds, capture trajectories, blur scoring, file I/O.

All operations are pure functions over immutable inputs. Point clouds are
plain dataclasses of numpy arrays; PLY files are binary little-endian with
float32 properties (including the nonstandard float color and "relevancy"
properties this package round-trips).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.signal import convolve2d
from scipy.spatial import cKDTree

from .errors import (
    AllInvalidDepth,
    DegenerateRange,
    ImageTooSmall,
    MalformedFile,
    NoSurface,
    TooFewPoints,
)
from .field import FeatureField
from .geometry import Aabb, is_rotation, look_at_rotation, make_pose, transform_points

LAPLACIAN_KERNEL = np.array([[0.0, 1.0, 0.0],
                             [1.0, -4.0, 1.0],
                             [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera with a rigid camera-to-world pose (OpenCV axis convention)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    pose: np.ndarray  # 4x4 camera-to-world

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        pose = np.asarray(self.pose, dtype=np.float64)
        if pose.shape != (4, 4) or not is_rotation(pose[:3, :3]):
            raise ValueError("pose must be a rigid transform with orthonormal rotation")
        object.__setattr__(self, "pose", pose)

    @property
    def position(self) -> np.ndarray:
        return self.pose[:3, 3]

    @property
    def forward(self) -> np.ndarray:
        """Camera +z axis in world coordinates."""
        return self.pose[:3, 2]


@dataclass(frozen=True)
class PointCloud:
    """N points with optional aligned colors, grouping features, relevancy."""

    points: np.ndarray
    colors: np.ndarray | None = None
    group_feats: np.ndarray | None = None
    relevancy: np.ndarray | None = None

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", pts)
        n = pts.shape[0]
        for name in ("colors", "group_feats", "relevancy"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape[0] != n:
                raise ValueError(f"{name} length {arr.shape[0]} != point count {n}")
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return int(self.points.shape[0])

    def select(self, mask_or_indices) -> "PointCloud":
        """Subcloud with all optional arrays filtered consistently."""
        def pick(arr):
            return None if arr is None else arr[mask_or_indices]
        return PointCloud(points=self.points[mask_or_indices],
                          colors=pick(self.colors),
                          group_feats=pick(self.group_feats),
                          relevancy=pick(self.relevancy))

    def with_relevancy(self, relevancy: np.ndarray) -> "PointCloud":
        return replace(self, relevancy=np.asarray(relevancy, dtype=np.float64))


@dataclass(frozen=True)
class DepthMap:
    """H x W depth in meters; 0 marks invalid pixels."""

    values: np.ndarray
    camera: CameraModel

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.camera.height, self.camera.width):
            raise ValueError("depth dimensions must match the camera")
        if np.any(vals < 0):
            raise ValueError("depth values must be >= 0")
        object.__setattr__(self, "values", vals)


def deproject(depth: DepthMap) -> PointCloud:
    """Pinhole deprojection of all valid pixels into world coordinates."""
    z = depth.values
    valid = z > 0
    if not np.any(valid):
        raise AllInvalidDepth("depth map has no valid pixels")
    cam = depth.camera
    vs, us = np.nonzero(valid)
    zz = z[vs, us]
    pts_cam = np.stack([zz * (us - cam.cx) / cam.fx,
                        zz * (vs - cam.cy) / cam.fy,
                        zz], axis=1)
    return PointCloud(points=transform_points(cam.pose, pts_cam))


def crop_workspace(pc: PointCloud, box: Aabb) -> PointCloud:
    """Keep exactly the points inside the closed box."""
    if not box.has_positive_extent():
        raise ValueError("crop box must have positive extent")
    return pc.select(box.contains(pc.points))


def reject_outliers(pc: PointCloud, k: int = 20, std_ratio: float = 2.0) -> PointCloud:
    """Drop points whose mean k-NN distance exceeds mean + std_ratio * stddev."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n = len(pc)
    if n <= k:
        raise TooFewPoints(f"need more than k={k} points, got {n}")
    tree = cKDTree(pc.points)
    dists, _ = tree.query(pc.points, k=k + 1)  # first neighbor is the point itself
    mean_knn = dists[:, 1:].mean(axis=1)
    thr = mean_knn.mean() + std_ratio * mean_knn.std()
    return pc.select(mean_knn <= thr)


def blur_score(image: np.ndarray) -> float:
    """Variance of the 3x3 Laplacian over the valid convolution region."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 3 or img.shape[1] < 3:
        raise ImageTooSmall("image must be at least 3x3 grayscale")
    lap = convolve2d(img, LAPLACIAN_KERNEL, mode="valid")
    return float(lap.var())


def blurry_mask(scores, fraction: float = 0.5) -> np.ndarray:
    """Flag captures scoring below fraction * median as discardable."""
    scores = np.asarray(scores, dtype=np.float64)
    return scores < fraction * np.median(scores)


def _camera_at(position: np.ndarray, target: np.ndarray, width: int, height: int,
               focal: float) -> CameraModel:
    rot = look_at_rotation(position, target)
    return CameraModel(fx=focal, fy=focal, cx=width / 2.0, cy=height / 2.0,
                       width=width, height=height,
                       pose=make_pose(rot, position))


def capture_trajectory(center, radius: float = 0.45, az_range_deg: float = 100.0,
                       incl_range_deg: tuple[float, float] = (30.0, 75.0),
                       n: int = 60, width: int = 640, height: int = 480,
                       focal: float = 525.0) -> list[CameraModel]:
    """Serpentine sweep of look-at poses over a spherical patch.

    Azimuth spans [-az_range_deg, +az_range_deg], inclination (elevation above
    the horizontal plane) spans incl_range_deg; every camera sits at `radius`
    from `center` with its +z axis through it.
    """
    center = np.asarray(center, dtype=np.float64)
    if n < 2:
        raise DegenerateRange("need at least 2 poses")
    if radius <= 0:
        raise DegenerateRange("radius must be positive")
    lo, hi = float(incl_range_deg[0]), float(incl_range_deg[1])
    if az_range_deg < 0 or hi < lo:
        raise DegenerateRange("azimuth range must be >= 0 and inclination ordered")
    az_span, incl_span = 2.0 * az_range_deg, hi - lo
    if incl_span == 0.0:
        rows = 1
    elif az_span == 0.0:
        rows = n
    else:
        rows = int(np.clip(round(np.sqrt(n * incl_span / az_span)), 1, n))
    cols = int(np.ceil(n / rows))
    incls = np.linspace(lo, hi, rows) if rows > 1 else np.array([lo])
    azs = np.linspace(-az_range_deg, az_range_deg, cols) if cols > 1 else np.array([0.0])

    cameras: list[CameraModel] = []
    for r, incl in enumerate(incls):
        row_azs = azs if r % 2 == 0 else azs[::-1]  # serpentine traversal
        for az in row_azs:
            if len(cameras) == n:
                break
            a, e = np.radians(az), np.radians(incl)
            pos = center + radius * np.array(
                [np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)]
            )
            cameras.append(_camera_at(pos, center, width, height, focal))
    return cameras


def render_occupancy_depth(field: FeatureField, camera: CameraModel,
                           step: float | None = None) -> DepthMap:
    """Z-depth to the first occupied voxel along each pixel ray.

    This is the inference-time stand-in for neural depth: rays march through
    the field's occupancy at half-voxel steps and stop at the first hit.
    """
    if step is None:
        step = float(field.voxel_size.min()) * 0.5
    h, w = camera.height, camera.width
    vs, us = np.mgrid[0:h, 0:w]
    dirs = np.stack([(us.ravel() - camera.cx) / camera.fx,
                     (vs.ravel() - camera.cy) / camera.fy,
                     np.ones(h * w)], axis=1)
    rot, t = camera.pose[:3, :3], camera.pose[:3, 3]

    corners = np.array([[x, y, z] for x in (field.bounds.lo[0], field.bounds.hi[0])
                        for y in (field.bounds.lo[1], field.bounds.hi[1])
                        for z in (field.bounds.lo[2], field.bounds.hi[2])])
    z_far = max(float(((corners - t) @ rot[:, 2]).max()), 0.0) + step
    if z_far <= step:
        return DepthMap(values=np.zeros((h, w)), camera=camera)

    depth = np.zeros(h * w)
    alive = np.arange(h * w)
    res = np.array(field.resolution)
    for z in np.arange(step, z_far, step):
        pts = t + z * (dirs[alive] @ rot.T)
        g = np.floor((pts - field.bounds.lo) / field.voxel_size).astype(np.int64)
        inside = np.all((g >= 0) & (g < res), axis=1)
        hit = np.zeros(len(alive), dtype=bool)
        gi = g[inside]
        hit[inside] = field.occupancy[gi[:, 0], gi[:, 1], gi[:, 2]]
        depth[alive[hit]] = z
        alive = alive[~hit]
        if alive.size == 0:
            break
    return DepthMap(values=depth.reshape(h, w), camera=camera)


def fuse_depth_maps(depths: list[DepthMap]) -> PointCloud:
    """Deproject and concatenate; raises NoSurface when every map is empty."""
    clouds = []
    for d in depths:
        if np.any(d.values > 0):
            clouds.append(deproject(d).points)
    if not clouds:
        raise NoSurface("no rendered view produced any surface hits")
    return PointCloud(points=np.concatenate(clouds, axis=0))


# -- PLY and JSON artifacts ---------------------------------------------------


def save_ply(path, pc: PointCloud) -> None:
    """Binary little-endian PLY; colors and relevancy stored as float32."""
    props = ["property float x", "property float y", "property float z"]
    columns = [pc.points]
    if pc.colors is not None:
        props += ["property float red", "property float green", "property float blue"]
        columns.append(pc.colors)
    if pc.relevancy is not None:
        props.append("property float relevancy")
        columns.append(pc.relevancy.reshape(-1, 1))
    header = "\n".join(
        ["ply", "format binary_little_endian 1.0", f"element vertex {len(pc)}"]
        + props + ["end_header", ""]
    )
    data = np.concatenate(columns, axis=1).astype("<f4") if len(pc) else np.zeros((0,))
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(data.tobytes())


def load_ply(path) -> PointCloud:
    raw = Path(path).read_bytes()
    end = raw.find(b"end_header\n")
    if not raw.startswith(b"ply\n") or end < 0:
        raise MalformedFile("not a PLY file")
    header_lines = raw[:end].decode("ascii", errors="replace").splitlines()
    if "format binary_little_endian 1.0" not in header_lines[1]:
        raise MalformedFile("only binary little-endian PLY is supported")
    n = None
    props: list[str] = []
    for line in header_lines[2:]:
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            n = int(parts[2])
        elif parts and parts[0] == "element":
            raise MalformedFile(f"unsupported element '{parts[1]}'")
        elif parts and parts[0] == "property":
            if n is None:
                raise MalformedFile("property outside vertex element")
            if parts[1] != "float":
                raise MalformedFile("only float properties are supported")
            props.append(parts[2])
    if n is None:
        raise MalformedFile("missing vertex element")
    for req in ("x", "y", "z"):
        if req not in props:
            raise MalformedFile(f"missing coordinate property '{req}'")
    body = raw[end + len(b"end_header\n"):]
    expected = n * len(props) * 4
    if len(body) < expected:
        raise MalformedFile("vertex payload truncated")
    table = np.frombuffer(body, dtype="<f4", count=n * len(props)).reshape(n, len(props))
    col = {p: table[:, i].astype(np.float64) for i, p in enumerate(props)}
    points = np.stack([col["x"], col["y"], col["z"]], axis=1) if n else np.zeros((0, 3))
    colors = None
    if all(c in col for c in ("red", "green", "blue")):
        colors = np.stack([col["red"], col["green"], col["blue"]], axis=1)
    relevancy = col.get("relevancy")
    return PointCloud(points=points, colors=colors, relevancy=relevancy)


def save_trajectory_json(cameras: list[CameraModel], path) -> None:
    poses = [c.pose.reshape(-1).tolist() for c in cameras]
    Path(path).write_text(json.dumps(poses))


def load_trajectory_json(path) -> list[np.ndarray]:
    try:
        poses = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise MalformedFile(f"cannot read trajectory JSON: {e}") from e
    return [np.asarray(p, dtype=np.float64).reshape(4, 4) for p in poses]
