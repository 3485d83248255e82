"""Pydantic request/response models for the grasp-selection service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class GraspRequest(BaseModel):
    field_path: str
    sidecar_path: str
    object_query: str
    part_query: str | None = None
    output_dir: str
    w: float = 0.95
    tau: float = 0.58
    neighbor_radius_factor: float = 2.0
    pca_components: int = 3
    nms_trans_tol: float = 0.01
    nms_rot_tol_deg: float = 15.0
    friction_deg: float = 30.0
    n_samples: int = 400
    n_views: int = 6
    view_size: int = 64
    cam_radius: float = 0.45
    n_az: int = 8
    n_incl: int = 3
    top_k: int = 10
    seed: int = 0
    ground_truth_path: str | None = None


class GraspResponse(BaseModel):
    report: dict
    artifacts: dict[str, str]


class QueryRequest(BaseModel):
    field_path: str
    sidecar_path: str
    phrase: str
    resolution: tuple[int, int] | None = None
    output_dir: str | None = None


class QueryResponse(BaseModel):
    argmax_point: list[float]
    argmax_score: float
    localized_seed: list[float]
    localized_score: float
    heatmap_png: str | None = None
    report_path: str | None = None


class SynthRequest(BaseModel):
    out_field: str
    out_sidecar: str
    out_ground_truth: str | None = None
    spec_path: str | None = None  # JSON scene spec; otherwise a seeded random scene
    seed: int = 0
    n_objects: int = 4
    n_parts: int = 3
    noise_sigma: float = 0.02


class SynthResponse(BaseModel):
    field_path: str
    sidecar_path: str
    ground_truth_path: str | None = None
    n_occupied: int
    objects: list[str]


class PlanRequest(BaseModel):
    task: str
    objects: list[str]
    k: int = 7
    offline_responses_path: str | None = None


class PlanResponse(BaseModel):
    action: str
    object: str
    part: str
    place: str | None = None


class TrajectoryRequest(BaseModel):
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 0.45
    az_range_deg: float = 100.0
    incl_lo_deg: float = 30.0
    incl_hi_deg: float = 75.0
    n: int = 60
    out_path: str | None = None


class TrajectoryResponse(BaseModel):
    poses: list[list[float]]
    out_path: str | None = None


class BenchRequest(BaseModel):
    n_scenes: int = 50
    seed: int = 0
    weights: list[float] = Field(default_factory=lambda: [0.0, 0.5, 0.95, 1.0])
    n_objects_lo: int = 3
    n_objects_hi: int = 6
    n_parts_lo: int = 2
    n_parts_hi: int = 4
    noise_sigma: float = 0.02
    out_path: str | None = None


class BenchResponse(BaseModel):
    n_scenes: int
    weights: list[float]
    correct_object_rate: dict[str, float]
    correct_part_rate: dict[str, float]
    runtime_s: float
    out_path: str | None = None


class ErrorResponse(BaseModel):
    error: str
    message: str
    exit_code: int
