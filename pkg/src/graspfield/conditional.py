"""Conditional part queries: relevancy restricted to an object mask.

Conditioning only restricts which points are evaluated; each masked point's
score is exactly what a direct best-scale query at that point would return,
kept absolute (not renormalized) so grasp scoring can mix it with geometric
confidence on a fixed [0, 1] range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask
from .extraction import ObjectMask
from .field import FeatureField, TextQuery
from .scene import PointCloud


@dataclass(frozen=True)
class PartDistribution:
    """Per-masked-point relevancy scores and their argmax scales."""

    mask: ObjectMask
    indices: np.ndarray  # owning-cloud indices, ascending; aligns scores/best_scale
    scores: np.ndarray
    best_scale: np.ndarray

    def __post_init__(self) -> None:
        if self.scores.shape[0] != self.indices.shape[0]:
            raise ValueError("scores must align with indices")
        if np.any(self.scores < 0) or np.any(self.scores > 1):
            raise ValueError("scores must lie in [0, 1]")

    @property
    def max_score(self) -> float:
        return float(self.scores.max())


def conditional_part_relevancy(field: FeatureField, pc: PointCloud,
                               mask: ObjectMask, part_query: TextQuery,
                               n_refine: int = 0) -> PartDistribution:
    """Best-scale relevancy for every masked point, and only those points."""
    if len(mask) == 0:
        raise EmptyMask("object mask is empty")
    idx = mask.indices
    if idx.max() >= len(pc):
        raise EmptyMask("mask indices exceed the owning cloud")
    # surface points can drift epsilon outside the box; clamp onto the closed bounds
    pts = np.clip(pc.points[idx], field.bounds.lo, field.bounds.hi)
    scores, scales, degenerate = field.best_scale_relevancy_batch(
        pts, part_query, n_refine=n_refine
    )
    scores = np.where(degenerate, 0.0, scores)
    return PartDistribution(mask=mask, indices=idx, scores=scores, best_scale=scales)


def top_fraction(dist: PartDistribution, frac: float) -> np.ndarray:
    """The ceil(frac * n) highest-scoring cloud indices, ties to smaller index."""
    if not (0 < frac <= 1):
        raise ValueError("frac must lie in (0, 1]")
    n = dist.scores.shape[0]
    k = int(np.ceil(frac * n))
    order = np.lexsort((dist.indices, -dist.scores))  # score desc, then index asc
    return dist.indices[order[:k]]


def relevancy_cloud(pc: PointCloud, dist: PartDistribution) -> PointCloud:
    """Masked subcloud carrying the distribution's scores as relevancy."""
    sub = pc.select(dist.indices)
    return sub.with_relevancy(dist.scores)
