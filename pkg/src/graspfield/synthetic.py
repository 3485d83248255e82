"""Ground-truth synthetic scenes and brute-force reference computations.

Scenes voxelize simple shapes over a desk-scale grid and assign mutually
orthogonal label embeddings, which makes relevancy separations analytically
predictable and keeps every pipeline stage testable without any pretrained
model. Also hosts the exhaustive reference implementations used as oracles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import OverlappingObjects
from .field import DEFAULT_NEGATIVES, FeatureField, TextQuery, relevancy
from .geometry import Aabb
from .scene import PointCloud

DEFAULT_BOUNDS = Aabb([-0.3, -0.3, -0.05], [0.3, 0.3, 0.55])  # 0.6 m cube
DEFAULT_RESOLUTION = (64, 64, 64)
DEFAULT_SCALES = (0.05, 0.10, 0.15, 0.22, 0.30, 0.40)
TABLE_LABEL = "table"


@dataclass
class PartSpec:
    name: str
    region: Aabb  # in object frame
    lang_label: str
    scale_affinity: int  # index into the field's scale list


@dataclass
class ChildShape:
    shape: str  # box | cylinder | sphere
    dimensions: tuple
    offset: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))


@dataclass
class ObjectSpec:
    name: str
    shape: str  # box | cylinder | sphere | composite
    position: np.ndarray  # object-frame origin in world (shape center)
    dimensions: tuple  # box: (lx,ly,lz); cylinder: (r,h); sphere: (r,)
    label: str
    parts: list[PartSpec] = dc_field(default_factory=list)
    children: list[ChildShape] = dc_field(default_factory=list)  # for composite


@dataclass
class SyntheticSceneSpec:
    objects: list[ObjectSpec]
    vocabulary: list[str]
    bounds: Aabb = DEFAULT_BOUNDS
    resolution: tuple = DEFAULT_RESOLUTION
    scales: tuple = DEFAULT_SCALES
    d_lang: int = 64
    d_group: int = 16
    noise_sigma: float = 0.02
    table_thickness: float = 0.02
    table_label: str = TABLE_LABEL


@dataclass
class GroundTruth:
    """Per-voxel labels plus world-frame AABBs of voxelized objects and parts."""

    object_id: np.ndarray  # (nx,ny,nz) int; -1 empty, -2 table, else object index
    part_id: np.ndarray  # (nx,ny,nz) int; -1 none, else part index within object
    label_embeddings: dict[str, np.ndarray]
    object_aabbs: list[Aabb]
    part_aabbs: list[list[Aabb]]  # per object, per part
    object_names: list[str]
    object_labels: list[str]
    part_names: list[list[str]]
    part_labels: list[list[str]]


def orthonormal_embeddings(phrases: list[str], dim: int,
                           rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Exactly orthonormal random unit vectors, one per phrase (needs len <= dim)."""
    n = len(phrases)
    if n > dim:
        raise ValueError(f"{n} phrases need embedding dim >= {n}, got {dim}")
    a = rng.standard_normal((dim, n))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))  # deterministic sign convention
    return {p: q[:, i].copy() for i, p in enumerate(phrases)}


def _inside_shape(shape: str, dims: tuple, pts: np.ndarray) -> np.ndarray:
    """Closed membership test in the shape's own frame (origin at its center)."""
    if shape == "box":
        half = np.asarray(dims, dtype=np.float64) / 2.0
        return np.all(np.abs(pts) <= half, axis=1)
    if shape == "cylinder":
        r, h = dims
        return (pts[:, 0] ** 2 + pts[:, 1] ** 2 <= r * r) & (np.abs(pts[:, 2]) <= h / 2.0)
    if shape == "sphere":
        (r,) = dims
        return np.einsum("ij,ij->i", pts, pts) <= r * r
    raise ValueError(f"unknown shape '{shape}'")


def _object_membership(obj: ObjectSpec, pts_world: np.ndarray) -> np.ndarray:
    local = pts_world - np.asarray(obj.position, dtype=np.float64)
    if obj.shape == "composite":
        inside = np.zeros(len(local), dtype=bool)
        for child in obj.children:
            inside |= _inside_shape(child.shape, child.dimensions,
                                    local - np.asarray(child.offset))
        return inside
    return _inside_shape(obj.shape, obj.dimensions, local)


def _shape_aabb(obj: ObjectSpec) -> Aabb:
    """Object-frame AABB of the shape (used to validate part regions)."""
    def one(shape, dims):
        if shape == "box":
            h = np.asarray(dims) / 2.0
            return -h, h
        if shape == "cylinder":
            r, hh = dims
            return np.array([-r, -r, -hh / 2]), np.array([r, r, hh / 2])
        if shape == "sphere":
            (r,) = dims
            return np.full(3, -r), np.full(3, r)
        raise ValueError(shape)
    if obj.shape == "composite":
        los, his = [], []
        for c in obj.children:
            lo, hi = one(c.shape, c.dimensions)
            los.append(lo + np.asarray(c.offset))
            his.append(hi + np.asarray(c.offset))
        return Aabb(np.min(los, axis=0), np.max(his, axis=0))
    lo, hi = one(obj.shape, obj.dimensions)
    return Aabb(lo, hi)


def build_scene(spec: SyntheticSceneSpec,
                rng: np.random.Generator) -> tuple[FeatureField, PointCloud, GroundTruth]:
    """Voxelize a scene spec into a feature field, cloud, and ground truth.

    Each occupied voxel carries its object label at every scale; voxels inside
    a part region carry the part label at that part's affinity scale instead
    (parts must not claim the largest scale, which stays object-level).
    Grouping features are a per-object unit vector plus a small per-part
    offset; Gaussian noise of spec.noise_sigma is added before renormalizing.
    """
    nx, ny, nz = spec.resolution
    n_scales = len(spec.scales)
    vocab = list(dict.fromkeys(
        list(spec.vocabulary) + [spec.table_label] + list(DEFAULT_NEGATIVES)
    ))
    labels = orthonormal_embeddings(vocab, spec.d_lang, rng)
    group_vecs = orthonormal_embeddings(
        [spec.table_label] + [o.name for o in spec.objects], spec.d_group, rng
    )

    for obj in spec.objects:
        box = _shape_aabb(obj)
        for part in obj.parts:
            if not (part.scale_affinity < n_scales - 1):
                raise ValueError(
                    f"part '{part.name}' claims the largest scale (object-level)"
                )
            if np.any(part.region.lo < box.lo - 1e-9) or np.any(part.region.hi > box.hi + 1e-9):
                raise ValueError(f"part region '{part.name}' outside object bounds")
            if part.lang_label not in labels or obj.label not in labels:
                raise ValueError("vocabulary must cover all labels")

    # voxel centers
    ix, iy, iz = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    idx = np.stack([ix.ravel(), iy.ravel(), iz.ravel()], axis=1)
    voxel = spec.bounds.extent / np.array([nx, ny, nz])
    centers = spec.bounds.lo + (idx + 0.5) * voxel

    object_id = np.full((nx, ny, nz), -1, dtype=np.int16)
    part_id = np.full((nx, ny, nz), -1, dtype=np.int16)

    lang = np.zeros((n_scales, nx, ny, nz, spec.d_lang), dtype=np.float32)
    group = np.zeros((nx, ny, nz, spec.d_group), dtype=np.float32)

    object_aabbs: list[Aabb] = []
    part_aabbs: list[list[Aabb]] = []

    def cells_aabb(sel_idx: np.ndarray) -> Aabb:
        lo = spec.bounds.lo + sel_idx.min(axis=0) * voxel
        hi = spec.bounds.lo + (sel_idx.max(axis=0) + 1) * voxel
        return Aabb(lo, hi)

    for oi, obj in enumerate(spec.objects):
        inside = _object_membership(obj, centers)
        sel = idx[inside]
        if sel.shape[0] == 0:
            raise ValueError(f"object '{obj.name}' voxelizes to nothing")
        claimed = object_id[sel[:, 0], sel[:, 1], sel[:, 2]]
        if np.any(claimed != -1):
            raise OverlappingObjects(
                f"object '{obj.name}' overlaps a previously placed object"
            )
        object_id[sel[:, 0], sel[:, 1], sel[:, 2]] = oi
        object_aabbs.append(cells_aabb(sel))

        obj_vec = labels[obj.label]
        lang[:, sel[:, 0], sel[:, 1], sel[:, 2], :] = obj_vec.astype(np.float32)

        base_group = group_vecs[obj.name]
        group[sel[:, 0], sel[:, 1], sel[:, 2], :] = base_group.astype(np.float32)

        local = centers[inside] - np.asarray(obj.position)
        this_part_aabbs = []
        for pi, part in enumerate(obj.parts):
            in_part = part.region.contains(local)
            # first matching part wins at region boundaries
            free = part_id[sel[:, 0], sel[:, 1], sel[:, 2]] == -1
            take = in_part & free
            psel = sel[take]
            if psel.shape[0] == 0:
                this_part_aabbs.append(Aabb(part.region.lo + obj.position,
                                            part.region.hi + obj.position))
                continue
            part_id[psel[:, 0], psel[:, 1], psel[:, 2]] = pi
            lang[part.scale_affinity, psel[:, 0], psel[:, 1], psel[:, 2], :] = \
                labels[part.lang_label].astype(np.float32)
            offset_dir = rng.standard_normal(spec.d_group)
            offset_dir /= np.linalg.norm(offset_dir)
            part_group = base_group + 0.15 * offset_dir
            part_group /= np.linalg.norm(part_group)
            group[psel[:, 0], psel[:, 1], psel[:, 2], :] = part_group.astype(np.float32)
            this_part_aabbs.append(cells_aabb(psel))
        part_aabbs.append(this_part_aabbs)

    # table slab just below z = 0, only where nothing else claimed the voxel
    table_sel = (centers[:, 2] < 0) & (centers[:, 2] >= -spec.table_thickness)
    tidx = idx[table_sel]
    free = object_id[tidx[:, 0], tidx[:, 1], tidx[:, 2]] == -1
    tidx = tidx[free]
    object_id[tidx[:, 0], tidx[:, 1], tidx[:, 2]] = -2
    lang[:, tidx[:, 0], tidx[:, 1], tidx[:, 2], :] = labels[spec.table_label].astype(np.float32)
    group[tidx[:, 0], tidx[:, 1], tidx[:, 2], :] = group_vecs[spec.table_label].astype(np.float32)

    occupied = object_id != -1
    occ_idx = np.argwhere(occupied)
    if spec.noise_sigma > 0:
        ls = lang[:, occupied, :].astype(np.float64)
        ls += rng.normal(0.0, spec.noise_sigma, size=ls.shape)
        ls /= np.linalg.norm(ls, axis=-1, keepdims=True)
        lang[:, occupied, :] = ls.astype(np.float32)
        gs = group[occupied].astype(np.float64)
        gs += rng.normal(0.0, spec.noise_sigma, size=gs.shape)
        gs /= np.linalg.norm(gs, axis=-1, keepdims=True)
        group[occupied] = gs.astype(np.float32)

    field = FeatureField(spec.bounds, np.asarray(spec.scales), lang, group)

    cloud_pts = spec.bounds.lo + (occ_idx + 0.5) * voxel
    cloud = PointCloud(points=cloud_pts,
                       group_feats=group[occ_idx[:, 0], occ_idx[:, 1], occ_idx[:, 2]])

    gt = GroundTruth(
        object_id=object_id,
        part_id=part_id,
        label_embeddings=labels,
        object_aabbs=object_aabbs,
        part_aabbs=part_aabbs,
        object_names=[o.name for o in spec.objects],
        object_labels=[o.label for o in spec.objects],
        part_names=[[p.name for p in o.parts] for o in spec.objects],
        part_labels=[[p.lang_label for p in o.parts] for o in spec.objects],
    )
    return field, cloud, gt


# -- brute-force references ---------------------------------------------------


def brute_force_argmax_relevancy(field: FeatureField,
                                 query: TextQuery) -> tuple[np.ndarray, float]:
    """Exhaustive best_scale_relevancy over every occupied voxel center."""
    best_score, best_point = -1.0, None
    for vi in field.occupied_indices:
        center = field.voxel_centers(vi)[0]
        for s in field.scales:
            phi = field.query_embedding(center, float(s))
            sc = relevancy(phi, query)
            if sc > best_score:
                best_score, best_point = sc, center
    return best_point, best_score


def brute_force_mask(pc: PointCloud, seed: np.ndarray, tau: float,
                     neighbor_radius_factor: float = 2.0,
                     basis: tuple[np.ndarray, np.ndarray] | None = None,
                     pca_components: int = 1) -> set[int]:
    """O(N^2) flood-fill reference with the same admission rule as floodfill."""
    pts = pc.points
    feats = pc.group_feats
    n = len(pc)
    if n == 1:
        return {0}
    diffs = pts[:, None, :] - pts[None, :, :]
    dmat = np.sqrt(np.einsum("ijk,ijk->ij", diffs, diffs))
    nn = np.partition(dmat + np.diag(np.full(n, np.inf)), 0, axis=1)[:, 0]
    radius = neighbor_radius_factor * float(np.median(nn))

    if basis is None:
        mean = feats.mean(axis=0)
        centered = feats - mean
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        comps = vt[:pca_components]
        for i in range(comps.shape[0]):
            j = int(np.argmax(np.abs(comps[i])))
            if comps[i, j] < 0:
                comps[i] = -comps[i]
    else:
        comps, mean = basis
        comps = comps[:pca_components]
    proj = (feats - mean) @ comps.T

    seed_idx = int(np.argmin(np.linalg.norm(pts - np.asarray(seed), axis=1)))
    admitted = np.linalg.norm(proj - proj[seed_idx], axis=1) <= tau
    adj = dmat <= radius

    visited = {seed_idx}
    frontier = [seed_idx]
    while frontier:
        cur = frontier.pop()
        for nb in np.nonzero(adj[cur])[0]:
            if nb not in visited and admitted[nb]:
                visited.add(int(nb))
                frontier.append(int(nb))
    return visited


# -- random benchmark scenes --------------------------------------------------

OBJECT_PHRASES = ["mug", "bottle", "hammer", "spray can", "teapot", "brush",
                  "cardboard box", "paper roll", "cup", "pan", "pitcher", "jar"]
PART_PHRASES = ["handle", "lid", "base", "neck", "grip", "spout", "rim", "body"]

BENCH_BOUNDS = Aabb([-0.24, -0.24, -0.04], [0.24, 0.24, 0.28])
BENCH_RESOLUTION = (48, 48, 32)
BENCH_SCALES = (0.04, 0.08, 0.16, 0.32)


def random_scene_spec(rng: np.random.Generator, n_objects_range=(3, 6),
                      n_parts_range=(2, 4), noise_sigma: float = 0.02
                      ) -> SyntheticSceneSpec:
    """Seeded random tabletop scene with vertically stacked part slabs.

    Objects sit on a 3x3 placement lattice with >= 5 cm gaps so flood fill
    cannot bridge between neighbors; every object is narrower than the gripper
    max width. Part regions split the object's height into equal slabs.
    """
    n_obj = int(rng.integers(n_objects_range[0], n_objects_range[1] + 1))
    cells = [(x, y) for x in (-0.15, 0.0, 0.15) for y in (-0.15, 0.0, 0.15)]
    order = rng.permutation(len(cells))[:n_obj]
    names = rng.permutation(OBJECT_PHRASES)[:n_obj]

    objects = []
    vocab: set[str] = set()
    for k in range(n_obj):
        cx, cy = cells[order[k]]
        cx += float(rng.uniform(-0.01, 0.01))
        cy += float(rng.uniform(-0.01, 0.01))
        shape = ["box", "cylinder"][int(rng.integers(0, 2))]
        height = float(rng.uniform(0.09, 0.12))
        if shape == "box":
            dims = (float(rng.uniform(0.036, 0.06)), float(rng.uniform(0.036, 0.06)), height)
        else:
            dims = (float(rng.uniform(0.02, 0.028)), height)
        n_parts = int(rng.integers(n_parts_range[0], n_parts_range[1] + 1))
        part_labels = rng.permutation(PART_PHRASES)[:n_parts]
        box = _shape_aabb(ObjectSpec("tmp", shape, np.zeros(3), dims, "tmp"))
        zs = np.linspace(box.lo[2], box.hi[2], n_parts + 1)
        parts = []
        for pi in range(n_parts):
            region = Aabb([box.lo[0], box.lo[1], zs[pi]], [box.hi[0], box.hi[1], zs[pi + 1]])
            parts.append(PartSpec(name=f"{part_labels[pi]}",
                                  region=region,
                                  lang_label=str(part_labels[pi]),
                                  scale_affinity=int(rng.integers(0, len(BENCH_SCALES) - 1))))
            vocab.add(str(part_labels[pi]))
        label = str(names[k])
        vocab.add(label)
        objects.append(ObjectSpec(name=f"obj{k}_{label}", shape=shape,
                                  position=np.array([cx, cy, height / 2.0]),
                                  dimensions=dims, label=label, parts=parts))

    return SyntheticSceneSpec(objects=objects, vocabulary=sorted(vocab),
                              bounds=BENCH_BOUNDS, resolution=BENCH_RESOLUTION,
                              scales=BENCH_SCALES, d_lang=48, d_group=16,
                              noise_sigma=noise_sigma)


# -- JSON scene specs ---------------------------------------------------------


def scene_spec_to_json(spec: SyntheticSceneSpec) -> dict:
    return {
        "bounds": spec.bounds.to_json(),
        "resolution": list(spec.resolution),
        "scales": list(spec.scales),
        "d_lang": spec.d_lang,
        "d_group": spec.d_group,
        "noise_sigma": spec.noise_sigma,
        "table_label": spec.table_label,
        "vocabulary": list(spec.vocabulary),
        "objects": [
            {
                "name": o.name,
                "shape": o.shape,
                "position": np.asarray(o.position).tolist(),
                "dimensions": list(o.dimensions),
                "label": o.label,
                "parts": [
                    {
                        "name": p.name,
                        "region": p.region.to_json(),
                        "lang_label": p.lang_label,
                        "scale_affinity": p.scale_affinity,
                    }
                    for p in o.parts
                ],
                "children": [
                    {
                        "shape": c.shape,
                        "dimensions": list(c.dimensions),
                        "offset": np.asarray(c.offset).tolist(),
                    }
                    for c in o.children
                ],
            }
            for o in spec.objects
        ],
    }


def scene_spec_from_json(data: dict) -> SyntheticSceneSpec:
    objects = []
    for o in data["objects"]:
        parts = [PartSpec(name=p["name"], region=Aabb.from_json(p["region"]),
                          lang_label=p["lang_label"],
                          scale_affinity=int(p["scale_affinity"]))
                 for p in o.get("parts", [])]
        children = [ChildShape(shape=c["shape"], dimensions=tuple(c["dimensions"]),
                               offset=np.asarray(c["offset"]))
                    for c in o.get("children", [])]
        objects.append(ObjectSpec(name=o["name"], shape=o["shape"],
                                  position=np.asarray(o["position"]),
                                  dimensions=tuple(o["dimensions"]),
                                  label=o["label"], parts=parts, children=children))
    kwargs = {}
    for key in ("resolution", "scales"):
        if key in data:
            kwargs[key] = tuple(data[key])
    for key in ("d_lang", "d_group", "noise_sigma", "table_label"):
        if key in data:
            kwargs[key] = data[key]
    if "bounds" in data:
        kwargs["bounds"] = Aabb.from_json(data["bounds"])
    return SyntheticSceneSpec(objects=objects, vocabulary=list(data["vocabulary"]),
                              **kwargs)


def load_scene_spec(path) -> SyntheticSceneSpec:
    return scene_spec_from_json(json.loads(Path(path).read_text()))


def save_scene_spec(spec: SyntheticSceneSpec, path) -> None:
    Path(path).write_text(json.dumps(scene_spec_to_json(spec), indent=2))
