"""HTTP service surface: routes, schemas, and domain-error mapping."""

from __future__ import annotations

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from graspfield.service import create_app
from graspfield.synthetic import scene_spec_to_json

from conftest import mug_spec


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


@pytest.fixture(scope="module")
def mug_files(tmp_path_factory, client):
    tmp = tmp_path_factory.mktemp("svc")
    spec_path = tmp / "spec.json"
    spec_path.write_text(json.dumps(scene_spec_to_json(mug_spec(noise_sigma=0.02))))
    r = client.post("/synth", json={
        "out_field": str(tmp / "mug.lfld"),
        "out_sidecar": str(tmp / "sidecar.json"),
        "out_ground_truth": str(tmp / "gt.json"),
        "spec_path": str(spec_path),
        "seed": 7,
    })
    assert r.status_code == 200, r.text
    return tmp, r.json()


def test_healthz(client):
    r = client.get("/healthz")
    assert r.status_code == 200
    assert r.json() == {"status": "ok"}


def test_synth_reports_objects(mug_files):
    _, body = mug_files
    assert body["objects"] == ["mug", "wooden block"]
    assert body["n_occupied"] > 0


def test_query_endpoint(client, mug_files):
    tmp, _ = mug_files
    r = client.post("/query", json={
        "field_path": str(tmp / "mug.lfld"),
        "sidecar_path": str(tmp / "sidecar.json"),
        "phrase": "mug",
        "output_dir": str(tmp / "q"),
    })
    assert r.status_code == 200, r.text
    body = r.json()
    assert body["argmax_score"] > 0.7
    gt = json.loads((tmp / "gt.json").read_text())
    lo, hi = gt["objects"][0]["aabb"]
    assert all(l <= x <= h for x, l, h in zip(body["localized_seed"], lo, hi))
    assert (tmp / "q" / "heatmap.png").exists()


def test_grasp_endpoint_with_ground_truth(client, mug_files):
    tmp, _ = mug_files
    r = client.post("/grasp", json={
        "field_path": str(tmp / "mug.lfld"),
        "sidecar_path": str(tmp / "sidecar.json"),
        "object_query": "mug",
        "part_query": "handle",
        "output_dir": str(tmp / "g"),
        "seed": 0,
        "ground_truth_path": str(tmp / "gt.json"),
    })
    assert r.status_code == 200, r.text
    report = r.json()["report"]
    assert report["correct_object"] is True
    assert report["correct_part"] is True
    for artifact in r.json()["artifacts"].values():
        assert json.loads(json.dumps(artifact))  # path strings
    assert (tmp / "g" / "grasps.json").exists()
    assert (tmp / "g" / "report.json").exists()


def test_domain_error_maps_to_422(client, tmp_path):
    r = client.post("/grasp", json={
        "field_path": str(tmp_path / "missing.lfld"),
        "sidecar_path": str(tmp_path / "missing.json"),
        "object_query": "mug",
        "output_dir": str(tmp_path / "out"),
    })
    assert r.status_code == 422
    body = r.json()
    assert body["error"] == "MalformedHeader"
    assert body["exit_code"] == 10
    assert not (tmp_path / "out").exists()  # no partial artifacts


def test_plan_endpoint_offline(client, tmp_path):
    responses = tmp_path / "responses.txt"
    responses.write_text("\n---\n".join(
        ["Basic Action: grasp\nSequence: 1. black pan 2. handle"] * 7
    ))
    r = client.post("/plan", json={
        "task": "pick up a pan",
        "objects": ["pot", "knife", "spoon", "black pan"],
        "offline_responses_path": str(responses),
    })
    assert r.status_code == 200, r.text
    assert r.json() == {"action": "grasp", "object": "black pan",
                        "part": "handle", "place": None}


def test_trajectory_endpoint(client):
    r = client.post("/trajectory", json={"n": 12})
    assert r.status_code == 200
    poses = r.json()["poses"]
    assert len(poses) == 12
    for p in poses:
        m = np.asarray(p).reshape(4, 4)
        assert np.linalg.norm(m[:3, 3]) == pytest.approx(0.45, abs=1e-6)


def test_bench_endpoint_small(client):
    r = client.post("/bench", json={"n_scenes": 2, "seed": 0,
                                    "weights": [0.95]})
    assert r.status_code == 200, r.text
    body = r.json()
    assert body["n_scenes"] == 2
    assert "0.95" in body["correct_part_rate"]
