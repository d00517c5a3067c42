import numpy as np
import pytest
from fastapi.testclient import TestClient
from hypothesis import given, settings
from hypothesis import strategies as st

from clickseg import __version__
from clickseg.harness import EvalConfig
from clickseg.phantom import write_phantom_dataset
from clickseg.service import create_app, rle_decode, rle_encode
from clickseg.simulate import SimConfig


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cases")
    write_phantom_dataset(root, 2, base_seed=400)
    return root


@pytest.fixture(scope="module")
def client(dataset):
    app = create_app(dataset, EvalConfig(sim=SimConfig(seed=1)))
    return TestClient(app)


def test_rle_round_trip_simple():
    mask = np.zeros((3, 4, 5), np.uint8)
    mask[1, 2, 3] = 1
    mask[2] = 1
    counts = rle_encode(mask)
    assert sum(counts) == mask.size
    assert np.array_equal(rle_decode(counts, mask.shape), mask)
    assert rle_encode(np.zeros((2, 2, 2), np.uint8)) == [8]
    assert rle_encode(np.ones((2, 2, 2), np.uint8)) == [0, 8]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=200))
def test_rle_round_trip_property(bits):
    arr = np.array(bits, np.uint8).reshape(1, 1, -1)
    assert np.array_equal(rle_decode(rle_encode(arr), arr.shape), arr)


def test_version(client):
    r = client.get("/api/version")
    assert r.status_code == 200
    assert r.json()["version"] == __version__


def test_cases_listing(client):
    r = client.get("/api/cases")
    assert r.status_code == 200
    cases = r.json()
    assert [c["id"] for c in cases] == sorted(c["id"] for c in cases)
    assert len(cases) == 2
    assert all(c["has_gt"] for c in cases)
    assert cases[0]["shape"] == [48, 48, 48]


def test_cases_empty_dataset(tmp_path):
    app = create_app(tmp_path)
    assert TestClient(app).get("/api/cases").json() == []


def test_cases_content_negotiation(client):
    r = client.get("/api/cases", headers={"accept": "text/html"})
    assert r.status_code == 406
    r = client.get("/api/cases", headers={"accept": "application/json"})
    assert r.status_code == 200


def test_slice_png_and_errors(client):
    case_id = client.get("/api/cases").json()[0]["id"]
    r = client.get(f"/api/cases/{case_id}/slice", params={"axis": 0, "index": 24})
    assert r.status_code == 200
    assert r.headers["content-type"] == "image/png"
    assert r.content[:8] == b"\x89PNG\r\n\x1a\n"

    # identical state -> identical bytes
    r2 = client.get(f"/api/cases/{case_id}/slice", params={"axis": 0, "index": 24})
    assert r2.content == r.content

    r = client.get(f"/api/cases/{case_id}/slice", params={"axis": 0, "index": 48})
    assert r.status_code == 404
    r = client.get(f"/api/cases/{case_id}/slice", params={"axis": 0, "index": 0, "window": "5,1"})
    assert r.status_code == 400
    r = client.get(f"/api/cases/{case_id}/slice", params={"axis": 7, "index": 0})
    assert r.status_code == 400
    r = client.get("/api/cases/ghost/slice", params={"axis": 0, "index": 0})
    assert r.status_code == 404


def test_slice_windowing_bounds(client):
    import io as _io

    from PIL import Image

    case_id = client.get("/api/cases").json()[0]["id"]
    # window far above the data -> everything clamps to 0
    r = client.get(f"/api/cases/{case_id}/slice",
                   params={"axis": 0, "index": 24, "window": "1000,1001"})
    img = np.asarray(Image.open(_io.BytesIO(r.content)))
    assert img.max() == 0


def test_segment_auto_mode_and_idempotence(client):
    case_id = client.get("/api/cases").json()[0]["id"]
    body = {"clicks": {"foreground": [], "background": []}}
    r1 = client.post(f"/api/cases/{case_id}/segment", json=body)
    assert r1.status_code == 200
    out = r1.json()
    assert out["mask_rle"]["shape"] == [48, 48, 48]
    assert "metrics" in out
    assert out["voxel_count"] > 0

    r2 = client.post(f"/api/cases/{case_id}/segment", json=body)
    assert r2.content == r1.content  # idempotent, stateless results


def test_segment_fg_click_lowers_fnvol(client, dataset):
    from clickseg.io import discover_cases, load_case

    case_id = client.get("/api/cases").json()[0]["id"]
    auto = client.post(f"/api/cases/{case_id}/segment", json={"clicks": {}}).json()

    # place a click inside a GT region the auto mode missed
    desc = next(d for d in discover_cases(dataset) if d.case_id == case_id)
    gt = load_case(desc).gt.as_bool()
    mask = rle_decode(auto["mask_rle"]["counts"], tuple(auto["mask_rle"]["shape"]))
    missed = np.argwhere(gt & (mask == 0))
    assert len(missed) > 0
    click = [int(c) for c in missed[len(missed) // 2]]

    refined = client.post(
        f"/api/cases/{case_id}/segment",
        json={"clicks": {"foreground": [click], "background": []}},
    ).json()
    assert refined["metrics"]["fnvol_mm3"] <= auto["metrics"]["fnvol_mm3"]
    assert refined["metrics"]["dice"] > auto["metrics"]["dice"]


def test_segment_rejects_bad_requests(client):
    case_id = client.get("/api/cases").json()[0]["id"]
    r = client.post(f"/api/cases/{case_id}/segment",
                    json={"clicks": {"foreground": [[99, 0, 0]]}})
    assert r.status_code == 422
    detail = r.json()["detail"]
    assert detail["index"] == 0 and detail["polarity"] == "foreground"

    r = client.post(f"/api/cases/{case_id}/segment",
                    json={"clicks": {}, "backend": {"name": "neural"}})
    assert r.status_code == 400


def test_segment_debug_slice_counts_match_rle(client):
    case_id = client.get("/api/cases").json()[0]["id"]
    out = client.post(f"/api/cases/{case_id}/segment",
                      json={"clicks": {}, "debug": True}).json()
    mask = rle_decode(out["mask_rle"]["counts"], tuple(out["mask_rle"]["shape"]))
    per_slice = mask.reshape(mask.shape[0], -1).sum(axis=1).tolist()
    assert out["slice_counts"] == per_slice
    assert sum(per_slice) == out["voxel_count"]


def test_overlay_uses_last_prediction(client):
    case_id = client.get("/api/cases").json()[1]["id"]
    base = client.get(f"/api/cases/{case_id}/slice",
                      params={"axis": 0, "index": 24, "channel": "overlay"})
    client.post(f"/api/cases/{case_id}/segment", json={"clicks": {}})
    out = client.get(f"/api/cases/{case_id}/slice",
                     params={"axis": 0, "index": 24, "channel": "overlay"})
    assert base.status_code == out.status_code == 200
