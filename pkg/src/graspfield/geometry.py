"""Rigid transforms, axis-aligned boxes, and look-at camera rotations.

Conventions used across the package: poses are 4x4 camera/gripper-to-world
matrices, cameras follow the OpenCV frame (+x right, +y down, +z forward),
grippers close along +x and approach along +z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROTATION_TOL = 1e-6


def l2_normalize(v: np.ndarray, axis: int = -1, eps: float = 0.0) -> np.ndarray:
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    if eps == 0.0 and np.any(n == 0):
        raise ValueError("cannot normalize zero vector")
    return v / np.maximum(n, eps if eps > 0 else n)


def is_rotation(r: np.ndarray, tol: float = ROTATION_TOL) -> bool:
    """Orthonormal within tol (inf norm of R^T R - I) and det = +1."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        return False
    err = np.max(np.abs(r.T @ r - np.eye(3)))
    return bool(err <= tol and abs(np.linalg.det(r) - 1.0) <= 10 * tol)


def make_pose(rotation: np.ndarray, translation: np.ndarray) -> np.ndarray:
    pose = np.eye(4)
    pose[:3, :3] = rotation
    pose[:3, 3] = np.asarray(translation, dtype=np.float64)
    return pose


def transform_points(pose: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Apply a 4x4 pose to (N,3) points."""
    points = np.asarray(points, dtype=np.float64)
    return points @ pose[:3, :3].T + pose[:3, 3]


def inverse_pose(pose: np.ndarray) -> np.ndarray:
    r = pose[:3, :3]
    t = pose[:3, 3]
    inv = np.eye(4)
    inv[:3, :3] = r.T
    inv[:3, 3] = -r.T @ t
    return inv


def rotation_geodesic(r1: np.ndarray, r2: np.ndarray) -> float:
    """Angle of the relative rotation, in radians."""
    c = (np.trace(r1.T @ r2) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def look_at_rotation(position: np.ndarray, target: np.ndarray,
                     up: np.ndarray = np.array([0.0, 0.0, 1.0])) -> np.ndarray:
    """Rotation whose +z axis points from position to target.

    Columns are the camera axes expressed in world coordinates. Falls back to
    a +y up vector when the viewing ray is parallel to ``up``.
    """
    z = np.asarray(target, dtype=np.float64) - np.asarray(position, dtype=np.float64)
    nz = np.linalg.norm(z)
    if nz == 0:
        raise ValueError("look-at target coincides with position")
    z = z / nz
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-8:
        x = np.cross(z, np.array([0.0, 1.0, 0.0]))
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


@dataclass(frozen=True)
class Aabb:
    """Closed axis-aligned box in world or object coordinates (meters)."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=np.float64).reshape(3))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=np.float64).reshape(3))

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))

    def has_positive_extent(self) -> bool:
        return bool(np.all(self.extent > 0))

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean membership (closed bounds) for a (N,3) array or single point."""
        points = np.asarray(points, dtype=np.float64)
        single = points.ndim == 1
        pts = np.atleast_2d(points)
        inside = np.all((pts >= self.lo) & (pts <= self.hi), axis=1)
        return bool(inside[0]) if single else inside

    def expanded(self, margin: float) -> "Aabb":
        return Aabb(self.lo - margin, self.hi + margin)

    def to_json(self) -> list[list[float]]:
        return [self.lo.tolist(), self.hi.tolist()]

    @staticmethod
    def from_json(data) -> "Aabb":
        return Aabb(np.asarray(data[0]), np.asarray(data[1]))
