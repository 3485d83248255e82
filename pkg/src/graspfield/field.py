"""Multi-scale language feature fields: LFLD storage, interpolation, relevancy.

A field holds unit-norm language embeddings on a voxel grid at S physical
scales plus a single grid of grouping embeddings. Relevancy of an embedding
against a text query is the minimum pairwise softmax against canonical
negative phrases:

    score = min_i  exp(phi . q) / (exp(phi . q) + exp(phi . n_i))

which lies strictly in (0, 1) and is monotone increasing in phi . q.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateInterpolation,
    DimensionMismatch,
    EmptyField,
    MalformedHeader,
    NonUnitEmbedding,
    OutOfBounds,
    ScaleOutOfRange,
    TruncatedPayload,
)
from .geometry import Aabb

LFLD_MAGIC = b"LFLD"
LFLD_VERSION = 1
OCCUPANCY_EPS = 1e-6
NORM_REJECT_LO = 0.9
NORM_REJECT_HI = 1.1
DEFAULT_NEGATIVES = ("object", "things", "stuff", "texture")

_HEADER_FMT = "<4sIIIIIII"  # magic, version, d_lang, d_group, S, nx, ny, nz
_HEADER_SIZE = struct.calcsize(_HEADER_FMT)


@dataclass(frozen=True)
class TextQuery:
    """A query phrase with its embedding and canonical negative embeddings."""

    phrase: str
    embedding: np.ndarray
    negatives: tuple[tuple[str, np.ndarray], ...]

    def __post_init__(self) -> None:
        if len(self.negatives) == 0:
            raise ValueError("TextQuery requires at least one negative")
        emb = np.asarray(self.embedding, dtype=np.float64)
        n = np.linalg.norm(emb)
        if n == 0:
            raise ValueError("query embedding must be nonzero")
        object.__setattr__(self, "embedding", emb / n)
        negs = []
        for phrase, vec in self.negatives:
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != emb.shape:
                raise DimensionMismatch(
                    f"negative '{phrase}' has dim {vec.shape[0]}, query has {emb.shape[0]}"
                )
            nn = np.linalg.norm(vec)
            if nn == 0:
                raise ValueError(f"negative '{phrase}' embedding must be nonzero")
            negs.append((phrase, vec / nn))
        object.__setattr__(self, "negatives", tuple(negs))

    @property
    def negative_matrix(self) -> np.ndarray:
        return np.stack([v for _, v in self.negatives], axis=0)


def relevancy(phi: np.ndarray, query: TextQuery) -> float:
    """Pairwise-softmax relevancy of one embedding against a query, in (0,1)."""
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape != query.embedding.shape:
        raise DimensionMismatch(
            f"embedding dim {phi.shape} does not match query dim {query.embedding.shape}"
        )
    return float(relevancy_batch(phi[None, :], query)[0])


def relevancy_batch(phis: np.ndarray, query: TextQuery) -> np.ndarray:
    """Vectorized relevancy for (N,d) embeddings; same formula as `relevancy`."""
    phis = np.asarray(phis, dtype=np.float64)
    if phis.shape[-1] != query.embedding.shape[0]:
        raise DimensionMismatch(
            f"embedding dim {phis.shape[-1]} does not match query dim {query.embedding.shape[0]}"
        )
    pq = phis @ query.embedding
    pn = phis @ query.negative_matrix.T  # (N, n_neg)
    # min_i softmax(pq; pn_i) = sigmoid(pq - max_i pn_i), computed stably
    worst = pn.max(axis=-1)
    x = pq - worst
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class FeatureField:
    """Immutable multi-scale language + grouping feature grid over an AABB.

    lang has layout [S][nx][ny][nz][d_lang], group [nx][ny][nz][d_group].
    A voxel is occupied iff its raw grouping norm exceeds OCCUPANCY_EPS;
    unoccupied voxels are stored as zero vectors (the in-band empty marker).
    All occupied embeddings are renormalized to unit norm on construction and
    rejected if their raw norm falls outside [0.9, 1.1].
    """

    def __init__(self, bounds: Aabb, scales: np.ndarray, lang: np.ndarray,
                 group: np.ndarray) -> None:
        scales = np.asarray(scales, dtype=np.float64).reshape(-1)
        lang = np.asarray(lang, dtype=np.float32)
        group = np.asarray(group, dtype=np.float32)
        if lang.ndim != 5 or group.ndim != 4:
            raise MalformedHeader("lang must be 5-D [S,nx,ny,nz,d], group 4-D [nx,ny,nz,d]")
        s, nx, ny, nz, _ = lang.shape
        if group.shape[:3] != (nx, ny, nz):
            raise MalformedHeader("lang and group grids disagree on resolution")
        if s != scales.shape[0]:
            raise MalformedHeader("scale count disagrees with lang payload")
        if scales.shape[0] < 1 or np.any(scales <= 0) or np.any(np.diff(scales) <= 0):
            raise MalformedHeader("scales must be strictly increasing and positive")
        if not bounds.has_positive_extent():
            raise MalformedHeader("bounds must have strictly positive extent")

        # normalization happens in place: the field takes ownership of the arrays
        group_norms = np.sqrt(np.einsum("...d,...d->...", group, group,
                                        dtype=np.float64))
        occupancy = group_norms > OCCUPANCY_EPS
        occ_idx = np.argwhere(occupancy)  # lexicographic (ix, iy, iz)

        if occ_idx.shape[0] > 0:
            gsel = group_norms[occupancy]
            if gsel.min() < NORM_REJECT_LO or gsel.max() > NORM_REJECT_HI:
                raise NonUnitEmbedding(
                    f"grouping norms outside [{NORM_REJECT_LO}, {NORM_REJECT_HI}]"
                )
            lsel = lang[:, occupancy, :].astype(np.float64)  # (S, n_occ, d)
            lnorms = np.linalg.norm(lsel, axis=-1)
            if lnorms.min() < NORM_REJECT_LO or lnorms.max() > NORM_REJECT_HI:
                raise NonUnitEmbedding(
                    f"language norms outside [{NORM_REJECT_LO}, {NORM_REJECT_HI}]"
                )
            lang[:, occupancy, :] = (lsel / lnorms[..., None]).astype(np.float32)
            group[occupancy] = (group[occupancy].astype(np.float64)
                                / gsel[:, None]).astype(np.float32)
            # enforce the zero in-band empty marker without gather copies
            lang *= occupancy[None, :, :, :, None]
            group *= occupancy[..., None]
            if not np.all(np.isfinite(lang)) or not np.all(np.isfinite(group)):
                raise NonUnitEmbedding("non-finite values in embedding payload")

        self.bounds = bounds
        self.scales = scales
        self.lang = lang
        self.group = group
        self.occupancy = occupancy
        self._occupied_indices = occ_idx
        self.resolution = (nx, ny, nz)
        self.voxel_size = bounds.extent / np.array([nx, ny, nz], dtype=np.float64)

    # -- introspection -------------------------------------------------------

    @property
    def d_lang(self) -> int:
        return self.lang.shape[-1]

    @property
    def d_group(self) -> int:
        return self.group.shape[-1]

    @property
    def n_scales(self) -> int:
        return int(self.scales.shape[0])

    @property
    def occupied_indices(self) -> np.ndarray:
        """(n_occ, 3) voxel indices in lexicographic (ix, iy, iz) order."""
        return self._occupied_indices

    def voxel_centers(self, indices: np.ndarray) -> np.ndarray:
        idx = np.atleast_2d(np.asarray(indices, dtype=np.float64))
        return self.bounds.lo + (idx + 0.5) * self.voxel_size

    def voxel_of(self, points: np.ndarray) -> np.ndarray:
        """Containing voxel index of each point, clipped to the grid."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        idx = np.floor((pts - self.bounds.lo) / self.voxel_size).astype(np.int64)
        return np.clip(idx, 0, np.array(self.resolution) - 1)

    # -- interpolation -------------------------------------------------------

    def _check_inside(self, points: np.ndarray) -> None:
        inside = self.bounds.contains(points)
        if not np.all(inside):
            bad = np.atleast_2d(points)[~np.atleast_1d(inside)][0]
            raise OutOfBounds(f"point {bad.tolist()} outside field bounds")

    def _corner_weights(self, points: np.ndarray):
        """Trilinear corner indices and fractional weights for (N,3) points."""
        res = np.array(self.resolution)
        g = (points - self.bounds.lo) / self.voxel_size - 0.5
        i0 = np.clip(np.floor(g).astype(np.int64), 0, np.maximum(res - 2, 0))
        frac = np.clip(g - i0, 0.0, 1.0)
        frac = np.where(res > 1, frac, 0.0)
        i1 = np.minimum(i0 + 1, res - 1)
        return i0, i1, frac

    def _interp_lang_at_scale_index(self, points: np.ndarray, s: int) -> np.ndarray:
        """Raw (pre-normalization) trilinear interpolation at stored scale s."""
        i0, i1, f = self._corner_weights(points)
        grid = self.lang[s]
        out = np.zeros((points.shape[0], self.d_lang), dtype=np.float64)
        for dx in (0, 1):
            wx = f[:, 0] if dx else 1.0 - f[:, 0]
            ix = i1[:, 0] if dx else i0[:, 0]
            for dy in (0, 1):
                wy = f[:, 1] if dy else 1.0 - f[:, 1]
                iy = i1[:, 1] if dy else i0[:, 1]
                for dz in (0, 1):
                    wz = f[:, 2] if dz else 1.0 - f[:, 2]
                    iz = i1[:, 2] if dz else i0[:, 2]
                    w = (wx * wy * wz)[:, None]
                    out += w * grid[ix, iy, iz].astype(np.float64)
        return out

    def _scale_bracket(self, scale: float) -> tuple[int, int, float]:
        scales = self.scales
        if scale < scales[0] or scale > scales[-1]:
            raise ScaleOutOfRange(
                f"scale {scale} outside [{scales[0]}, {scales[-1]}]"
            )
        j = int(np.searchsorted(scales, scale, side="left"))
        if j < len(scales) and scales[j] == scale:
            return j, j, 0.0
        t = (scale - scales[j - 1]) / (scales[j] - scales[j - 1])
        return j - 1, j, float(t)

    def query_embeddings_batch(self, points: np.ndarray, scale: float):
        """Unit-norm embeddings for (N,3) points at one scale.

        Returns (embeddings (N,d), degenerate (N,) bool); degenerate rows are
        left as zero vectors instead of raising.
        """
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        self._check_inside(points)
        j0, j1, t = self._scale_bracket(float(scale))
        v = self._interp_lang_at_scale_index(points, j0)
        if j1 != j0 and t > 0.0:
            v = (1.0 - t) * v + t * self._interp_lang_at_scale_index(points, j1)
        norms = np.linalg.norm(v, axis=-1)
        degenerate = norms < 1e-8
        safe = np.where(degenerate, 1.0, norms)
        return v / safe[:, None], degenerate

    def query_embedding(self, point: np.ndarray, scale: float) -> np.ndarray:
        """Trilinear in space, linear between bracketing scales, renormalized."""
        emb, degenerate = self.query_embeddings_batch(np.asarray(point)[None, :], scale)
        if degenerate[0]:
            raise DegenerateInterpolation(
                "interpolated embedding cancelled to zero norm"
            )
        return emb[0]

    # -- relevancy search ----------------------------------------------------

    def scale_candidates(self, n_refine: int = 0) -> np.ndarray:
        """The stored scales plus n_refine evenly spaced interior points per interval."""
        if n_refine <= 0 or self.n_scales == 1:
            return self.scales.copy()
        out = []
        for i in range(self.n_scales - 1):
            lo, hi = self.scales[i], self.scales[i + 1]
            out.append(lo)
            step = (hi - lo) / (n_refine + 1)
            out.extend(lo + step * (j + 1) for j in range(n_refine))
        out.append(self.scales[-1])
        return np.asarray(out)

    def best_scale_relevancy_batch(self, points: np.ndarray, query: TextQuery,
                                   n_refine: int = 0):
        """Per-point max relevancy over the scale candidates.

        Returns (scores, scales, degenerate). Ties go to the smaller scale.
        Degenerate rows (zero-norm interpolation at every scale) carry score 0.
        """
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        cands = self.scale_candidates(n_refine)
        all_scores = np.full((len(cands), points.shape[0]), -1.0)
        for k, s in enumerate(cands):
            emb, degen = self.query_embeddings_batch(points, float(s))
            sc = relevancy_batch(emb, query)
            sc[degen] = -1.0  # poisoned: never wins, never contributes
            all_scores[k] = sc
        best = np.argmax(all_scores, axis=0)  # first max = smaller scale
        scores = all_scores[best, np.arange(points.shape[0])]
        degenerate = scores < 0.0
        scores = np.where(degenerate, 0.0, scores)
        return scores, cands[best], degenerate

    def best_scale_relevancy(self, point: np.ndarray, query: TextQuery,
                             n_refine: int = 0) -> tuple[float, float]:
        """Grid search over stored scales; returns (score, argmax scale)."""
        scores, scales, degenerate = self.best_scale_relevancy_batch(
            np.asarray(point)[None, :], query, n_refine
        )
        if degenerate[0]:
            raise DegenerateInterpolation(
                "interpolated embedding cancelled to zero norm at every scale"
            )
        return float(scores[0]), float(scales[0])

    def stored_relevancy(self, voxel_indices: np.ndarray, query: TextQuery):
        """best_scale_relevancy for voxel centers, via direct array gather.

        Exactly equivalent to interpolating at voxel centers (trilinear weights
        collapse onto the stored vector there) but much faster for full-field
        scans such as localization and top-down rendering.
        """
        idx = np.atleast_2d(voxel_indices)
        vecs = self.lang[:, idx[:, 0], idx[:, 1], idx[:, 2], :].astype(np.float64)
        s, n, d = vecs.shape
        scores = relevancy_batch(vecs.reshape(s * n, d), query).reshape(s, n)
        best = np.argmax(scores, axis=0)
        return scores[best, np.arange(n)], self.scales[best]

    def render_relevancy_topdown(self, query: TextQuery,
                                 resolution: tuple[int, int] | None = None):
        """Top-down max-relevancy heatmap plus the argmax voxel center.

        Per (x, y) pixel the value is the max of best_scale_relevancy over
        occupied voxels in the covered columns; columns with no occupied voxel
        carry NaN. The argmax is taken over occupied voxels in lexicographic
        index order (first strict max wins).
        """
        nx, ny, _ = self.resolution
        if resolution is None:
            resolution = (nx, ny)
        rx, ry = int(resolution[0]), int(resolution[1])
        if rx < 1 or ry < 1:
            raise ValueError("resolution must be >= 1 per axis")
        occ = self.occupied_indices
        if occ.shape[0] == 0:
            raise EmptyField("field has no occupied voxels")

        scores, _ = self.stored_relevancy(occ, query)
        arg = int(np.argmax(scores))  # first max over lexicographic voxel order
        argmax_point = self.voxel_centers(occ[arg])[0]

        column_max = np.full((nx, ny), -np.inf)
        np.maximum.at(column_max, (occ[:, 0], occ[:, 1]), scores)

        # resample column maxima onto the requested pixel grid
        heat = np.full((rx, ry), np.nan)
        col_x = np.clip(((np.arange(nx) + 0.5) * rx / nx).astype(int), 0, rx - 1)
        col_y = np.clip(((np.arange(ny) + 0.5) * ry / ny).astype(int), 0, ry - 1)
        valid_cols = np.argwhere(np.isfinite(column_max))
        for ix, iy in valid_cols:
            px, py = col_x[ix], col_y[iy]
            v = column_max[ix, iy]
            if np.isnan(heat[px, py]) or v > heat[px, py]:
                heat[px, py] = v
        return heat, argmax_point, float(scores[arg])


# -- LFLD binary format -------------------------------------------------------


def write_field(field: FeatureField, path) -> None:
    """Write little-endian LFLD v1 with f16-quantized payloads."""
    s, (nx, ny, nz) = field.n_scales, field.resolution
    with open(path, "wb") as f:
        f.write(struct.pack(_HEADER_FMT, LFLD_MAGIC, LFLD_VERSION,
                            field.d_lang, field.d_group, s, nx, ny, nz))
        f.write(np.concatenate([field.bounds.lo, field.bounds.hi])
                .astype("<f4").tobytes())
        f.write(field.scales.astype("<f4").tobytes())
        f.write(field.lang.astype("<f2").tobytes())
        f.write(field.group.astype("<f2").tobytes())


def load_field(path) -> FeatureField:
    """Load and validate an LFLD file; renormalizes quantized embeddings."""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise MalformedHeader(f"cannot read field file: {e}") from e
    if len(raw) < _HEADER_SIZE:
        raise MalformedHeader("file shorter than LFLD header")
    magic, version, d_lang, d_group, s, nx, ny, nz = struct.unpack_from(
        _HEADER_FMT, raw, 0
    )
    if magic != LFLD_MAGIC:
        raise MalformedHeader(f"bad magic {magic!r}")
    if version != LFLD_VERSION:
        raise MalformedHeader(f"unsupported version {version}")
    if min(d_lang, d_group, s, nx, ny, nz) < 1:
        raise MalformedHeader("all header dimensions must be >= 1")

    off = _HEADER_SIZE
    meta_len = (6 + s) * 4
    if len(raw) < off + meta_len:
        raise MalformedHeader("file truncated inside bounds/scales block")
    bounds_arr = np.frombuffer(raw, dtype="<f4", count=6, offset=off).astype(np.float64)
    off += 24
    scales = np.frombuffer(raw, dtype="<f4", count=s, offset=off).astype(np.float64)
    off += 4 * s
    bounds = Aabb(bounds_arr[:3], bounds_arr[3:])
    if not bounds.has_positive_extent():
        raise MalformedHeader("bounds must have strictly positive extent")
    if np.any(scales <= 0) or np.any(np.diff(scales) <= 0):
        raise MalformedHeader("scales must be strictly increasing and positive")

    n_lang = s * nx * ny * nz * d_lang
    n_group = nx * ny * nz * d_group
    expected = off + 2 * (n_lang + n_group)
    if len(raw) != expected:
        raise TruncatedPayload(
            f"payload length {len(raw) - off} bytes, expected {expected - off}"
        )
    lang = np.frombuffer(raw, dtype="<f2", count=n_lang, offset=off).astype(np.float32)
    off += 2 * n_lang
    group = np.frombuffer(raw, dtype="<f2", count=n_group, offset=off).astype(np.float32)
    lang = lang.reshape(s, nx, ny, nz, d_lang)
    group = group.reshape(nx, ny, nz, d_group)
    return FeatureField(bounds, scales, lang, group)


# -- text-embedding sidecar ---------------------------------------------------


def save_text_sidecar(embeddings: dict[str, np.ndarray], path) -> None:
    data = {k: np.asarray(v, dtype=np.float32).tolist() for k, v in embeddings.items()}
    Path(path).write_text(json.dumps(data, sort_keys=True))


def load_text_sidecar(path) -> dict[str, np.ndarray]:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise MalformedHeader(f"cannot read text sidecar: {e}") from e
    return {k: np.asarray(v, dtype=np.float64) for k, v in data.items()}


def make_text_query(phrase: str, sidecar: dict[str, np.ndarray],
                    negatives: tuple[str, ...] = DEFAULT_NEGATIVES) -> TextQuery:
    """Build a TextQuery from sidecar vectors; phrase and negatives must be present."""
    if phrase not in sidecar:
        raise KeyError(f"phrase '{phrase}' not in text sidecar")
    negs = []
    for n in negatives:
        if n not in sidecar:
            raise KeyError(f"negative phrase '{n}' not in text sidecar")
        negs.append((n, sidecar[n]))
    return TextQuery(phrase=phrase, embedding=sidecar[phrase], negatives=tuple(negs))
