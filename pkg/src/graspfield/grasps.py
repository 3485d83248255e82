"""Parallel-jaw grasp proposal, deduplication, scoring, ranking, pose chains.

Gripper frame convention: +x is the closing axis (jaws move along it), +z is
the approach direction, the grasp origin sits midway between the fingertips.
The combined score is s = w * s_sem + (1 - w) * s_geom with w defaulting to
0.95; s_sem is the median relevancy of cloud points inside the grasp volume.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    EmptyCloud,
    MalformedFile,
    NoValidPairs,
    ProposerFailure,
    WeightOutOfRange,
)
from .geometry import is_rotation, look_at_rotation, make_pose, rotation_geodesic
from .scene import CameraModel, PointCloud

MAX_GRIPPER_WIDTH = 0.085
PRE_GRASP_OFFSET = 0.05  # meters back along the gripper z axis
POST_GRASP_LIFT = 0.10  # meters up along world z
FLIP_Z = np.diag([-1.0, -1.0, 1.0])  # 180 degrees about the approach axis


@dataclass
class GraspCandidate:
    """6-DOF parallel-jaw grasp with geometric / semantic / combined scores."""

    pose: np.ndarray  # 4x4 gripper-to-world
    width: float
    s_geom: float
    s_sem: float | None = None
    s: float | None = None

    def __post_init__(self) -> None:
        pose = np.asarray(self.pose, dtype=np.float64)
        if pose.shape != (4, 4) or not is_rotation(pose[:3, :3]):
            raise ValueError("grasp pose must be a rigid transform")
        if not (0 < self.width <= MAX_GRIPPER_WIDTH):
            raise ValueError(f"width must lie in (0, {MAX_GRIPPER_WIDTH}]")
        if not (0 <= self.s_geom <= 1):
            raise ValueError("s_geom must lie in [0, 1]")
        self.pose = pose

    @property
    def translation(self) -> np.ndarray:
        return self.pose[:3, 3]

    @property
    def closing_axis(self) -> np.ndarray:
        return self.pose[:3, 0]

    @property
    def approach(self) -> np.ndarray:
        return self.pose[:3, 2]


@dataclass(frozen=True)
class GraspVolume:
    """Box between the jaws: grasp width x finger depth x jaw height."""

    finger_depth: float = 0.04
    jaw_height: float = 0.02

    def __post_init__(self) -> None:
        if self.finger_depth <= 0 or self.jaw_height <= 0:
            raise ValueError("grasp volume extents must be positive")


@dataclass(frozen=True)
class PoseChain:
    """Pre-grasp / grasp / post-grasp waypoints (plus the wrist-flip marker)."""

    pre_grasp: np.ndarray
    grasp: np.ndarray
    post_grasp: np.ndarray
    wrist_alternate: bool = False


class GraspProposer(ABC):
    """Interface for grasp proposers operating on a camera-frame cloud."""

    @abstractmethod
    def propose(self, points_cam: np.ndarray) -> list[GraspCandidate]:
        """Return grasps posed in the same (camera) frame as the input points."""


def virtual_cameras(center, radius: float = 0.45, n_az: int = 8,
                    n_incl: int = 3, width: int = 64, height: int = 64,
                    focal: float = 64.0) -> list[CameraModel]:
    """Look-at cameras on the full upper hemisphere (azimuth 0-360, incl 15-75)."""
    if n_az < 1 or n_incl < 1:
        raise ValueError("need at least one camera per axis")
    center = np.asarray(center, dtype=np.float64)
    azs = np.linspace(0.0, 360.0, n_az, endpoint=False)
    incls = np.linspace(15.0, 75.0, n_incl)
    cams = []
    for incl in incls:
        for az in azs:
            a, e = np.radians(az), np.radians(incl)
            pos = center + radius * np.array(
                [np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)]
            )
            rot = look_at_rotation(pos, center)
            cams.append(CameraModel(fx=focal, fy=focal, cx=width / 2, cy=height / 2,
                                    width=width, height=height,
                                    pose=make_pose(rot, pos)))
    return cams


def propose_grasps(pc: PointCloud, cameras: list[CameraModel],
                   proposer: GraspProposer) -> list[GraspCandidate]:
    """Run the proposer once per camera frame and lift results back to world.

    Output order is camera order, then the proposer's own order.
    """
    if len(pc) == 0:
        raise EmptyCloud("cannot propose grasps on an empty cloud")
    out: list[GraspCandidate] = []
    for ci, cam in enumerate(cameras):
        rot, t = cam.pose[:3, :3], cam.pose[:3, 3]
        pts_cam = (pc.points - t) @ rot
        try:
            local = proposer.propose(pts_cam)
        except Exception as e:  # noqa: BLE001 - context added, original chained
            raise ProposerFailure(f"camera {ci}: {e}") from e
        for g in local:
            world_pose = cam.pose @ g.pose
            out.append(GraspCandidate(pose=world_pose, width=g.width,
                                      s_geom=g.s_geom, s_sem=g.s_sem, s=g.s))
    return out


class AntipodalProposer(GraspProposer):
    """Built-in sampler: antipodal point pairs under a friction-cone test.

    Normals come from a k-NN plane fit (k=10) and are direction-ambiguous, so
    antipodality is checked sign-invariantly: both normals must align with the
    pair axis within friction_deg. s_geom is the product of the two alignment
    cosines. The approach direction is the perpendicular candidate that
    collides least with the cloud, tie-broken toward the viewing direction.
    """

    def __init__(self, max_width: float = MAX_GRIPPER_WIDTH,
                 friction_deg: float = 30.0, n_samples: int = 400,
                 seed: int = 0, max_points: int = 1500,
                 n_approach: int = 16, normal_k: int = 10) -> None:
        self.max_width = max_width
        self.friction_deg = friction_deg
        self.n_samples = n_samples
        self.max_points = max_points
        self.n_approach = n_approach
        self.normal_k = normal_k
        self.rng = np.random.default_rng(seed)

    @staticmethod
    def estimate_normals(points: np.ndarray, k: int = 10) -> np.ndarray:
        """Per-point unit normal from the smallest eigenvector of the k-NN scatter."""
        n = points.shape[0]
        k = min(k, n)
        tree = cKDTree(points)
        _, nbrs = tree.query(points, k=k)
        if k == 1:
            nbrs = nbrs[:, None]
        nb_pts = points[nbrs]  # (n, k, 3)
        centered = nb_pts - nb_pts.mean(axis=1, keepdims=True)
        cov = np.einsum("nki,nkj->nij", centered, centered)
        _, vecs = np.linalg.eigh(cov)
        normals = vecs[:, :, 0]
        norms = np.linalg.norm(normals, axis=1, keepdims=True)
        return normals / np.maximum(norms, 1e-12)

    def propose(self, points_cam: np.ndarray) -> list[GraspCandidate]:
        pts = np.asarray(points_cam, dtype=np.float64)
        if pts.shape[0] < 2:
            raise NoValidPairs("need at least 2 points to sample antipodal pairs")
        if pts.shape[0] > self.max_points:
            keep = self.rng.choice(pts.shape[0], self.max_points, replace=False)
            pts = pts[np.sort(keep)]
        normals = self.estimate_normals(pts, self.normal_k)
        tree = cKDTree(pts)
        cos_friction = np.cos(np.radians(self.friction_deg))

        grasps: list[GraspCandidate] = []
        for _ in range(self.n_samples):
            i = int(self.rng.integers(pts.shape[0]))
            partners = tree.query_ball_point(pts[i], self.max_width)
            if len(partners) <= 1:
                continue
            j = int(partners[int(self.rng.integers(len(partners)))])
            if j == i:
                continue
            delta = pts[j] - pts[i]
            dist = float(np.linalg.norm(delta))
            if dist < 1e-6 or dist > self.max_width:
                continue
            u = delta / dist
            ci = abs(float(normals[i] @ u))
            cj = abs(float(normals[j] @ u))
            if ci < cos_friction or cj < cos_friction:
                continue
            center = 0.5 * (pts[i] + pts[j])
            approach = self._pick_approach(pts, center, u, dist)
            y = np.cross(approach, u)
            pose = make_pose(np.column_stack([u, y, approach]), center)
            grasps.append(GraspCandidate(pose=pose, width=dist, s_geom=ci * cj))
        if not grasps:
            raise NoValidPairs("no antipodal pair satisfied the friction cone")
        return grasps

    def _pick_approach(self, pts: np.ndarray, center: np.ndarray,
                       u: np.ndarray, width: float) -> np.ndarray:
        """Least-colliding direction perpendicular to the closing axis."""
        seed_axis = np.eye(3)[int(np.argmin(np.abs(u)))]
        v = np.cross(u, seed_axis)
        v /= np.linalg.norm(v)
        w = np.cross(u, v)
        angles = 2.0 * np.pi * np.arange(self.n_approach) / self.n_approach
        cands = np.cos(angles)[:, None] * v + np.sin(angles)[:, None] * w

        rel = pts - center
        near = np.linalg.norm(rel, axis=1) <= 0.08
        rel = rel[near]
        along_u = np.abs(rel @ u) <= width / 2 + 0.01
        rel = rel[along_u]
        # prefer approaches whose back side (where the gripper body sits) is clear
        if rel.shape[0] == 0:
            counts = np.zeros(self.n_approach)
        else:
            proj = rel @ cands.T  # (m, n_approach)
            side = np.cross(np.broadcast_to(u, cands.shape), cands)
            lateral = np.abs(rel @ side.T) <= 0.015
            counts = ((proj <= -0.015) & lateral).sum(axis=0)
        view_dir = center / max(float(np.linalg.norm(center)), 1e-9)
        align = cands @ view_dir
        best = int(np.lexsort((np.arange(self.n_approach), -align, counts))[0])
        return cands[best]


def nms(grasps: list[GraspCandidate], trans_tol: float = 0.01,
        rot_tol: float = np.radians(15.0)) -> list[GraspCandidate]:
    """Greedy suppression by descending s_geom.

    A grasp is dropped iff some kept grasp lies within both the translation
    and rotation tolerances; rotation distance is invariant to the 180-degree
    closing-axis flip.
    """
    if trans_tol <= 0 or rot_tol <= 0:
        raise ValueError("NMS tolerances must be positive")
    order = np.argsort([-g.s_geom for g in grasps], kind="stable")
    kept: list[GraspCandidate] = []
    for gi in order:
        g = grasps[gi]
        suppressed = False
        for k in kept:
            if np.linalg.norm(g.translation - k.translation) > trans_tol:
                continue
            r1, r2 = g.pose[:3, :3], k.pose[:3, :3]
            d = min(rotation_geodesic(r1, r2), rotation_geodesic(r1, r2 @ FLIP_Z))
            if d <= rot_tol:
                suppressed = True
                break
        if not suppressed:
            kept.append(g)
    return kept


def points_in_volume(grasp: GraspCandidate, points: np.ndarray,
                     volume: GraspVolume) -> np.ndarray:
    """Boolean membership of world points in the closed grasp volume box."""
    rot, t = grasp.pose[:3, :3], grasp.pose[:3, 3]
    local = (points - t) @ rot
    return ((np.abs(local[:, 0]) <= grasp.width / 2)
            & (np.abs(local[:, 1]) <= volume.jaw_height / 2)
            & (np.abs(local[:, 2]) <= volume.finger_depth / 2))


def lower_median(values: np.ndarray) -> float:
    v = np.sort(np.asarray(values, dtype=np.float64))
    return float(v[(v.size - 1) // 2])


def semantic_score(grasp: GraspCandidate, pc: PointCloud,
                   volume: GraspVolume = GraspVolume()) -> float:
    """Median relevancy of the points inside the grasp volume (0 when empty).

    Uses the lower median for even counts so the score is always an observed
    relevancy value.
    """
    if pc.relevancy is None:
        raise ValueError("semantic_score requires a cloud with relevancy values")
    inside = points_in_volume(grasp, pc.points, volume)
    if not np.any(inside):
        return 0.0
    return lower_median(pc.relevancy[inside])


def rank(grasps: list[GraspCandidate], w: float = 0.95) -> list[GraspCandidate]:
    """Combine scores (s = w*s_sem + (1-w)*s_geom) and sort descending.

    Stable: ties break by higher s_geom, then insertion order.
    """
    if not (0.0 <= w <= 1.0):
        raise WeightOutOfRange(f"weight w={w} outside [0, 1]")
    for g in grasps:
        if g.s_sem is None:
            raise ValueError("all grasps must carry s_sem before ranking")
        g.s = w * g.s_sem + (1.0 - w) * g.s_geom
    order = sorted(range(len(grasps)),
                   key=lambda i: (-grasps[i].s, -grasps[i].s_geom, i))
    return [grasps[i] for i in order]


def pose_chain(grasp: GraspCandidate) -> tuple[PoseChain, PoseChain]:
    """Waypoint chain plus the 180-degree wrist-flipped alternate.

    Pre-grasp backs off 5 cm along the gripper z axis; post-grasp lifts 10 cm
    along world z. The alternate's rotation flips about gripper z, negating
    the closing axis while keeping all waypoint translations.
    """
    g = grasp.pose
    pre = g.copy()
    pre[:3, 3] = g[:3, 3] - PRE_GRASP_OFFSET * g[:3, 2]
    post = g.copy()
    post[:3, 3] = g[:3, 3] + np.array([0.0, 0.0, POST_GRASP_LIFT])

    alt_g = g.copy()
    alt_g[:3, :3] = g[:3, :3] @ FLIP_Z
    alt_pre = alt_g.copy()
    alt_pre[:3, 3] = alt_g[:3, 3] - PRE_GRASP_OFFSET * alt_g[:3, 2]
    alt_post = alt_g.copy()
    alt_post[:3, 3] = alt_g[:3, 3] + np.array([0.0, 0.0, POST_GRASP_LIFT])

    return (PoseChain(pre, g, post, wrist_alternate=False),
            PoseChain(alt_pre, alt_g, alt_post, wrist_alternate=True))


# -- grasp list JSON ----------------------------------------------------------


def save_grasps_json(path, grasps: list[GraspCandidate], w: float) -> None:
    data = {
        "grasps": [
            {
                "pose": g.pose.reshape(-1).tolist(),
                "width": g.width,
                "s_geom": g.s_geom,
                **({"s_sem": g.s_sem} if g.s_sem is not None else {}),
                **({"s": g.s} if g.s is not None else {}),
            }
            for g in grasps
        ],
        "weight_w": w,
    }
    Path(path).write_text(json.dumps(data))


def load_grasps_json(path) -> tuple[list[GraspCandidate], float]:
    """Importer for the grasp schema; s_sem and s are optional on input."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise MalformedFile(f"cannot read grasp JSON: {e}") from e
    if "grasps" not in data:
        raise MalformedFile("grasp JSON missing 'grasps' key")
    out = []
    for g in data["grasps"]:
        try:
            out.append(GraspCandidate(
                pose=np.asarray(g["pose"], dtype=np.float64).reshape(4, 4),
                width=float(g["width"]),
                s_geom=float(g["s_geom"]),
                s_sem=float(g["s_sem"]) if "s_sem" in g else None,
                s=float(g["s"]) if "s" in g else None,
            ))
        except (KeyError, ValueError, TypeError) as e:
            raise MalformedFile(f"bad grasp entry: {e}") from e
    return out, float(data.get("weight_w", 0.95))
