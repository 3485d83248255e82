"""End-to-end orchestration: localize -> object cloud -> flood fill ->
conditional part query -> propose -> NMS -> score -> rank.

Shared by the service handlers, the CLI, and the synthetic benchmark. All
functions here are in-memory; artifact writing lives in the service layer.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .conditional import PartDistribution, conditional_part_relevancy, relevancy_cloud
from .errors import NoGraspFound, NoValidPairs, ProposerFailure
from .extraction import (
    FloodFillParams,
    ObjectMask,
    floodfill,
    foreground_mask,
    localize_object,
    object_cloud,
    pca_basis,
    render_topdown_group,
)
from .field import DEFAULT_NEGATIVES, FeatureField, make_text_query
from .geometry import Aabb
from .grasps import (
    AntipodalProposer,
    GraspCandidate,
    GraspVolume,
    nms,
    propose_grasps,
    rank,
    semantic_score,
    virtual_cameras,
)
from .scene import PointCloud
from .synthetic import GroundTruth, build_scene, random_scene_spec


@dataclass
class PipelineParams:
    """Tunables for one grasp-selection run (defaults match the CLI flags)."""

    w: float = 0.95
    tau: float = 0.58
    neighbor_radius_factor: float = 2.0
    pca_components: int = 3
    nms_trans_tol: float = 0.01
    nms_rot_tol_deg: float = 15.0
    friction_deg: float = 30.0
    n_samples: int = 400
    max_gripper_width: float = 0.085
    finger_depth: float = 0.04
    jaw_height: float = 0.02
    n_views: int = 6
    view_size: int = 64
    cam_radius: float = 0.45
    n_az: int = 8
    n_incl: int = 3
    negatives: tuple[str, ...] = DEFAULT_NEGATIVES
    seed: int = 0

    @property
    def volume(self) -> GraspVolume:
        return GraspVolume(finger_depth=self.finger_depth, jaw_height=self.jaw_height)


@dataclass
class GraspOutcome:
    """Everything the pipeline computed for one (object, part) query."""

    seed_point: np.ndarray
    seed_score: float
    mask: ObjectMask
    cloud: PointCloud
    distribution: PartDistribution
    scored_grasps: list[GraspCandidate]  # post-NMS, with s_sem, unranked
    ranked: list[GraspCandidate]
    relevancy_points: PointCloud

    def report(self) -> dict:
        top = self.ranked[0]
        return {
            "seed_point": [float(x) for x in self.seed_point],
            "seed_score": float(self.seed_score),
            "mask_size": int(len(self.mask)),
            "max_part_relevancy": float(self.distribution.max_score),
            "n_grasps_scored": len(self.scored_grasps),
            "top_grasp": {
                "pose": [float(x) for x in top.pose.reshape(-1)],
                "width": float(top.width),
                "s_geom": float(top.s_geom),
                "s_sem": float(top.s_sem),
                "s": float(top.s),
            },
        }


def run_grasp_on_field(field: FeatureField, sidecar: dict, object_phrase: str,
                       part_phrase: str | None, params: PipelineParams
                       ) -> GraspOutcome:
    """Full pipeline on a loaded field; raises NoGraspFound when nothing ranks."""
    q_obj = make_text_query(object_phrase, sidecar, params.negatives)
    part_phrase = part_phrase or object_phrase
    q_part = make_text_query(part_phrase, sidecar, params.negatives)

    feats, valid = render_topdown_group(field)
    fg = foreground_mask(feats, valid)
    basis = pca_basis(feats[valid], params.pca_components)

    seed, seed_score = localize_object(field, q_obj, fg)
    cloud = object_cloud(field, seed, n_views=params.n_views,
                         image_size=params.view_size)
    mask = floodfill(cloud, seed,
                     FloodFillParams(tau=params.tau,
                                     neighbor_radius_factor=params.neighbor_radius_factor,
                                     pca_components=params.pca_components),
                     basis=basis)
    dist = conditional_part_relevancy(field, cloud, mask, q_part)
    rel_cloud = relevancy_cloud(cloud, dist)

    cameras = virtual_cameras(center=rel_cloud.points.mean(axis=0),
                              radius=params.cam_radius,
                              n_az=params.n_az, n_incl=params.n_incl)
    proposer = AntipodalProposer(max_width=params.max_gripper_width,
                                 friction_deg=params.friction_deg,
                                 n_samples=params.n_samples, seed=params.seed)
    try:
        candidates = propose_grasps(rel_cloud, cameras, proposer)
    except ProposerFailure as e:
        if isinstance(e.__cause__, NoValidPairs):
            raise NoGraspFound("no antipodal grasp candidate on the object") from e
        raise
    candidates = nms(candidates, params.nms_trans_tol,
                     np.radians(params.nms_rot_tol_deg))
    for g in candidates:
        g.s_sem = semantic_score(g, rel_cloud, params.volume)
    if not candidates:
        raise NoGraspFound("all candidates were suppressed")
    ranked = rank(candidates, params.w)
    return GraspOutcome(seed_point=seed, seed_score=seed_score, mask=mask,
                        cloud=cloud, distribution=dist,
                        scored_grasps=candidates, ranked=ranked,
                        relevancy_points=rel_cloud)


def evaluate_grasp(top: GraspCandidate, object_aabb: Aabb,
                   part_aabb: Aabb) -> tuple[bool, bool]:
    """Correct-object / correct-part booleans for a top-ranked grasp center."""
    center = top.translation
    return bool(object_aabb.contains(center)), bool(part_aabb.contains(center))


# -- synthetic benchmark ------------------------------------------------------


@dataclass
class BenchScene:
    index: int
    object_label: str
    part_label: str
    correct_object: dict[float, bool] = dc_field(default_factory=dict)
    correct_part: dict[float, bool] = dc_field(default_factory=dict)


@dataclass
class BenchResult:
    n_scenes: int
    weights: list[float]
    correct_object_rate: dict[float, float]
    correct_part_rate: dict[float, float]
    runtime_s: float
    scenes: list[BenchScene]

    def to_json(self) -> dict:
        return {
            "n_scenes": self.n_scenes,
            "weights": self.weights,
            "correct_object_rate": {str(w): r for w, r in self.correct_object_rate.items()},
            "correct_part_rate": {str(w): r for w, r in self.correct_part_rate.items()},
            "runtime_s": self.runtime_s,
            "scenes": [
                {
                    "index": s.index,
                    "object": s.object_label,
                    "part": s.part_label,
                    "correct_object": {str(w): v for w, v in s.correct_object.items()},
                    "correct_part": {str(w): v for w, v in s.correct_part.items()},
                }
                for s in self.scenes
            ],
        }


def bench_params(seed: int = 0) -> PipelineParams:
    """Benchmark configuration: lighter camera ring to stay inside the budget."""
    return PipelineParams(n_az=6, n_incl=2, n_samples=250, seed=seed)


def run_bench(n_scenes: int = 50, seed: int = 0,
              weights: tuple[float, ...] = (0.0, 0.5, 0.95, 1.0),
              n_objects_range=(3, 6), n_parts_range=(2, 4),
              noise_sigma: float = 0.02,
              params: PipelineParams | None = None) -> BenchResult:
    """Seeded synthetic benchmark: one (object, part) query per scene.

    Proposal, NMS, and semantic scoring are weight-independent, so each scene
    is solved once and re-ranked per weight.
    """
    t0 = time.perf_counter()
    scenes: list[BenchScene] = []
    for i in range(n_scenes):
        rng = np.random.default_rng([seed, i])
        spec = random_scene_spec(rng, n_objects_range, n_parts_range, noise_sigma)
        field, _, gt = build_scene(spec, rng)
        target_obj = int(rng.integers(len(spec.objects)))
        target_part = int(rng.integers(len(spec.objects[target_obj].parts)))
        obj_label = gt.object_labels[target_obj]
        part_label = gt.part_labels[target_obj][target_part]

        p = params if params is not None else bench_params(seed)
        outcome = run_grasp_on_field(field, gt.label_embeddings, obj_label,
                                     part_label, p)
        scene = BenchScene(index=i, object_label=obj_label, part_label=part_label)
        for w in weights:
            ranked = rank(list(outcome.scored_grasps), w)
            ok_obj, ok_part = evaluate_grasp(
                ranked[0], gt.object_aabbs[target_obj],
                gt.part_aabbs[target_obj][target_part]
            )
            scene.correct_object[w] = ok_obj
            scene.correct_part[w] = ok_part
        scenes.append(scene)

    runtime = time.perf_counter() - t0
    return BenchResult(
        n_scenes=n_scenes,
        weights=list(weights),
        correct_object_rate={
            w: float(np.mean([s.correct_object[w] for s in scenes])) for w in weights
        },
        correct_part_rate={
            w: float(np.mean([s.correct_part[w] for s in scenes])) for w in weights
        },
        runtime_s=runtime,
        scenes=scenes,
    )


def ground_truth_to_json(gt: GroundTruth) -> dict:
    return {
        "objects": [
            {
                "name": gt.object_names[i],
                "label": gt.object_labels[i],
                "aabb": gt.object_aabbs[i].to_json(),
                "parts": [
                    {
                        "name": gt.part_names[i][j],
                        "label": gt.part_labels[i][j],
                        "aabb": gt.part_aabbs[i][j].to_json(),
                    }
                    for j in range(len(gt.part_names[i]))
                ],
            }
            for i in range(len(gt.object_names))
        ],
    }


def lookup_ground_truth(gt_data: dict, object_phrase: str,
                        part_phrase: str | None) -> tuple[Aabb, Aabb] | None:
    """Find the (object AABB, part AABB) for the queried labels, if present."""
    for obj in gt_data.get("objects", []):
        if obj["label"] != object_phrase:
            continue
        obj_aabb = Aabb.from_json(obj["aabb"])
        if part_phrase is None:
            return obj_aabb, obj_aabb
        for part in obj.get("parts", []):
            if part["label"] == part_phrase:
                return obj_aabb, Aabb.from_json(part["aabb"])
        return obj_aabb, obj_aabb
    return None
