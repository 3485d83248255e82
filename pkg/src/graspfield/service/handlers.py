"""Service request handlers: load inputs, run the pipeline, write artifacts.

These functions are the single implementation behind both the HTTP routes and
the CLI's in-process mode; they raise GraspFieldError subclasses on domain
failures and leave HTTP/exit-code mapping to their callers.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .. import pipeline
from ..field import load_field, load_text_sidecar, make_text_query, write_field
from ..extraction import foreground_mask, localize_object, render_topdown_group
from ..planner import HttpLLMClient, OfflineClient, majority_vote
from ..scene import capture_trajectory, save_trajectory_json
from ..grasps import save_grasps_json
from ..scene import PointCloud, save_ply
from ..synthetic import build_scene, load_scene_spec, random_scene_spec
from .schemas import (
    BenchRequest,
    BenchResponse,
    GraspRequest,
    GraspResponse,
    PlanRequest,
    PlanResponse,
    QueryRequest,
    QueryResponse,
    SynthRequest,
    SynthResponse,
    TrajectoryRequest,
    TrajectoryResponse,
)


def _params_from_request(req: GraspRequest) -> pipeline.PipelineParams:
    return pipeline.PipelineParams(
        w=req.w, tau=req.tau,
        neighbor_radius_factor=req.neighbor_radius_factor,
        pca_components=req.pca_components,
        nms_trans_tol=req.nms_trans_tol,
        nms_rot_tol_deg=req.nms_rot_tol_deg,
        friction_deg=req.friction_deg,
        n_samples=req.n_samples,
        n_views=req.n_views,
        view_size=req.view_size,
        cam_radius=req.cam_radius,
        n_az=req.n_az,
        n_incl=req.n_incl,
        seed=req.seed,
    )


def _dump_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def handle_grasp(req: GraspRequest) -> GraspResponse:
    field = load_field(req.field_path)
    sidecar = load_text_sidecar(req.sidecar_path)
    params = _params_from_request(req)
    outcome = pipeline.run_grasp_on_field(field, sidecar, req.object_query,
                                          req.part_query, params)

    report = outcome.report()
    report["object_query"] = req.object_query
    report["part_query"] = req.part_query or req.object_query
    report["seed"] = req.seed
    report["w"] = req.w
    if req.ground_truth_path:
        gt_data = json.loads(Path(req.ground_truth_path).read_text())
        found = pipeline.lookup_ground_truth(gt_data, req.object_query, req.part_query)
        if found is not None:
            obj_aabb, part_aabb = found
            ok_obj, ok_part = pipeline.evaluate_grasp(outcome.ranked[0],
                                                      obj_aabb, part_aabb)
            report["correct_object"] = ok_obj
            report["correct_part"] = ok_part

    out = Path(req.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    grasps_path = out / "grasps.json"
    mask_path = out / "mask.ply"
    relevancy_path = out / "relevancy.ply"
    report_path = out / "report.json"

    save_grasps_json(grasps_path, outcome.ranked[:req.top_k], req.w)
    mask_cloud = PointCloud(points=outcome.cloud.points[outcome.mask.indices])
    save_ply(mask_path, mask_cloud)
    save_ply(relevancy_path, outcome.relevancy_points)
    _dump_json(report_path, report)

    return GraspResponse(report=report, artifacts={
        "grasps": str(grasps_path),
        "mask_ply": str(mask_path),
        "relevancy_ply": str(relevancy_path),
        "report": str(report_path),
    })


def handle_query(req: QueryRequest) -> QueryResponse:
    field = load_field(req.field_path)
    sidecar = load_text_sidecar(req.sidecar_path)
    query = make_text_query(req.phrase, sidecar)
    heat, argmax_point, score = field.render_relevancy_topdown(query, req.resolution)
    feats, valid = render_topdown_group(field)
    fg = foreground_mask(feats, valid)
    seed, seed_score = localize_object(field, query, fg)

    heatmap_png = None
    report_path = None
    if req.output_dir:
        out = Path(req.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        heatmap_png = str(out / "heatmap.png")
        _write_heatmap_png(heat, heatmap_png)
        report_path = str(out / "query_report.json")
        _dump_json(Path(report_path), {
            "phrase": req.phrase,
            "argmax_point": [float(x) for x in argmax_point],
            "argmax_score": float(score),
            "localized_seed": [float(x) for x in seed],
            "localized_score": float(seed_score),
        })
    return QueryResponse(argmax_point=[float(x) for x in argmax_point],
                         argmax_score=float(score),
                         localized_seed=[float(x) for x in seed],
                         localized_score=float(seed_score),
                         heatmap_png=heatmap_png,
                         report_path=report_path)


def _write_heatmap_png(heat: np.ndarray, path: str) -> None:
    """Grayscale heatmap; no-data pixels render black."""
    from PIL import Image

    valid = np.isfinite(heat)
    img = np.zeros(heat.shape, dtype=np.uint8)
    if np.any(valid):
        vals = heat[valid]
        lo, hi = float(vals.min()), float(vals.max())
        span = hi - lo if hi > lo else 1.0
        img[valid] = (1 + 254 * (heat[valid] - lo) / span).astype(np.uint8)
    # transpose: heatmap axes are (x, y); image rows are y
    Image.fromarray(img.T[::-1]).save(path)


def handle_synth(req: SynthRequest) -> SynthResponse:
    rng = np.random.default_rng(req.seed)
    if req.spec_path:
        spec = load_scene_spec(req.spec_path)
    else:
        spec = random_scene_spec(rng,
                                 n_objects_range=(req.n_objects, req.n_objects),
                                 n_parts_range=(req.n_parts, req.n_parts),
                                 noise_sigma=req.noise_sigma)
    field, _, gt = build_scene(spec, rng)
    write_field(field, req.out_field)
    from ..field import save_text_sidecar

    save_text_sidecar(gt.label_embeddings, req.out_sidecar)
    gt_path = None
    if req.out_ground_truth:
        _dump_json(Path(req.out_ground_truth), pipeline.ground_truth_to_json(gt))
        gt_path = req.out_ground_truth
    return SynthResponse(field_path=req.out_field,
                         sidecar_path=req.out_sidecar,
                         ground_truth_path=gt_path,
                         n_occupied=int(field.occupancy.sum()),
                         objects=[o.label for o in spec.objects])


def handle_plan(req: PlanRequest) -> PlanResponse:
    if req.offline_responses_path:
        client = OfflineClient(req.offline_responses_path)
    else:
        client = HttpLLMClient.from_env()
    plan = majority_vote(req.task, req.objects, client, k=req.k)
    return PlanResponse(action=plan.action, object=plan.object,
                        part=plan.part, place=plan.place)


def handle_trajectory(req: TrajectoryRequest) -> TrajectoryResponse:
    cams = capture_trajectory(center=np.asarray(req.center), radius=req.radius,
                              az_range_deg=req.az_range_deg,
                              incl_range_deg=(req.incl_lo_deg, req.incl_hi_deg),
                              n=req.n)
    out_path = None
    if req.out_path:
        save_trajectory_json(cams, req.out_path)
        out_path = req.out_path
    return TrajectoryResponse(poses=[c.pose.reshape(-1).tolist() for c in cams],
                              out_path=out_path)


def handle_bench(req: BenchRequest) -> BenchResponse:
    result = pipeline.run_bench(
        n_scenes=req.n_scenes, seed=req.seed, weights=tuple(req.weights),
        n_objects_range=(req.n_objects_lo, req.n_objects_hi),
        n_parts_range=(req.n_parts_lo, req.n_parts_hi),
        noise_sigma=req.noise_sigma,
    )
    out_path = None
    if req.out_path:
        _dump_json(Path(req.out_path), result.to_json())
        out_path = req.out_path
    return BenchResponse(
        n_scenes=result.n_scenes,
        weights=result.weights,
        correct_object_rate={str(w): r for w, r in result.correct_object_rate.items()},
        correct_part_rate={str(w): r for w, r in result.correct_part_rate.items()},
        runtime_s=result.runtime_s,
        out_path=out_path,
    )
