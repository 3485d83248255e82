"""Shared fixtures: tiny hand-built fields and labeled synthetic scenes."""

from __future__ import annotations

import numpy as np
import pytest

from graspfield.field import FeatureField, TextQuery
from graspfield.geometry import Aabb
from graspfield.synthetic import (
    ChildShape,
    ObjectSpec,
    PartSpec,
    SyntheticSceneSpec,
    build_scene,
)


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


def make_field(bounds, resolution, scales, lang, group):
    """Plain constructor wrapper; copies inputs since the field takes ownership."""
    return FeatureField(Aabb(*bounds), np.asarray(scales, dtype=np.float64),
                        np.array(lang, dtype=np.float32),
                        np.array(group, dtype=np.float32))


def uniform_field(e=None, scales=(0.1, 0.2), res=(3, 3, 3), d_group=2):
    """Every voxel occupied and holding the same unit language vector e."""
    if e is None:
        e = unit([1.0, 2.0, -1.0, 0.5])
    d_lang = len(e)
    s = len(scales)
    lang = np.broadcast_to(np.asarray(e, dtype=np.float32),
                           (s, *res, d_lang)).copy()
    g = unit(np.arange(1, d_group + 1))
    group = np.broadcast_to(g.astype(np.float32), (*res, d_group)).copy()
    return make_field(([0, 0, 0], [0.3, 0.3, 0.3]), res, scales, lang, group)


def simple_query(q, negatives=None, d=None):
    q = np.asarray(q, dtype=np.float64)
    if negatives is None:
        d = q.shape[0]
        neg = np.zeros(d)
        neg[-1] = 1.0
        if abs(q[-1]) > 0.99:  # fall back to another axis
            neg = np.zeros(d)
            neg[0] = 1.0
        negatives = (("neg", neg),)
    return TextQuery(phrase="q", embedding=q, negatives=tuple(negatives))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def mug_spec(noise_sigma: float = 0.0) -> SyntheticSceneSpec:
    """Cylinder body plus a handle box on its +x side, desk-scale grid."""
    body_r, body_h = 0.025, 0.09
    handle = ChildShape(shape="box", dimensions=(0.018, 0.014, 0.05),
                        offset=np.array([body_r + 0.009, 0.0, 0.0]))
    parts = [
        PartSpec(name="handle",
                 region=Aabb([body_r - 1e-6, -0.008, -0.026],
                             [body_r + 0.018, 0.008, 0.026]),
                 lang_label="handle", scale_affinity=0),
        PartSpec(name="rim",
                 region=Aabb([-body_r, -body_r, 0.025], [body_r, body_r, 0.045]),
                 lang_label="rim", scale_affinity=1),
    ]
    mug = ObjectSpec(
        name="mug", shape="composite", position=np.array([-0.05, 0.0, body_h / 2]),
        dimensions=(), label="mug", parts=parts,
        children=[ChildShape(shape="cylinder", dimensions=(body_r, body_h)), handle],
    )
    box = ObjectSpec(
        name="block", shape="box", position=np.array([0.12, 0.1, 0.03]),
        dimensions=(0.05, 0.05, 0.06), label="wooden block", parts=[],
    )
    return SyntheticSceneSpec(
        objects=[mug, box],
        vocabulary=["mug", "handle", "rim", "wooden block"],
        bounds=Aabb([-0.2, -0.2, -0.04], [0.2, 0.2, 0.24]),
        resolution=(40, 40, 28),
        scales=(0.05, 0.1, 0.2, 0.3),
        d_lang=32,
        d_group=12,
        noise_sigma=noise_sigma,
    )


@pytest.fixture(scope="session")
def mug_scene():
    rng = np.random.default_rng(7)
    return build_scene(mug_spec(), rng)


@pytest.fixture(scope="session")
def noisy_mug_scene():
    rng = np.random.default_rng(7)
    return build_scene(mug_spec(noise_sigma=0.02), rng)
