"""Spin up the HTTP service on a demo dataset and exercise the API.

Writes a small phantom dataset, starts the server in-process, and walks the
endpoints the browser UI uses: list cases, fetch a slice PNG, request a
segmentation with and without clicks, and decode the returned RLE mask.

To use the interactive browser UI instead, build the frontend once
(``cd frontend && npm install && npm run build``) and run
``clickseg serve <dataset-dir>``; then open http://127.0.0.1:8000/.
"""

import tempfile
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from clickseg.harness import EvalConfig
from clickseg.phantom import write_phantom_dataset
from clickseg.service import create_app, rle_decode
from clickseg.simulate import SimConfig

root = Path(tempfile.mkdtemp(prefix="clickseg-demo-"))
write_phantom_dataset(root, 3, base_seed=0)
print(f"demo dataset at {root}")

client = TestClient(create_app(root, EvalConfig(sim=SimConfig(seed=1))))

cases = client.get("/api/cases").json()
print(f"\nGET /api/cases -> {len(cases)} cases")
for c in cases:
    print(f"  {c['id']}: shape={c['shape']} spacing={c['spacing']} gt={c['has_gt']}")

case_id = cases[0]["id"]
png = client.get(f"/api/cases/{case_id}/slice", params={"axis": 0, "index": 24})
print(f"\nGET /slice -> {len(png.content)} bytes of PNG")

auto = client.post(f"/api/cases/{case_id}/segment", json={"clicks": {}}).json()
print(f"\nPOST /segment (no clicks, auto mode): {auto['voxel_count']} voxels")
print(f"  metrics: {auto['metrics']}")

mask = rle_decode(auto["mask_rle"]["counts"], tuple(auto["mask_rle"]["shape"]))
print(f"  decoded RLE -> mask with {int(mask.sum())} voxels (matches voxel_count)")

# click the center of the biggest miss and watch FNvol drop
from clickseg.io import discover_cases, load_case

case = load_case(next(d for d in discover_cases(root) if d.case_id == case_id))
missed = np.argwhere(case.gt.as_bool() & (mask == 0))
click = [int(v) for v in missed[len(missed) // 2]]
refined = client.post(
    f"/api/cases/{case_id}/segment",
    json={"clicks": {"foreground": [click], "background": []}},
).json()
print(f"\nPOST /segment (1 fg click at {click}):")
print(f"  metrics: {refined['metrics']}")
print(f"  FNvol {auto['metrics']['fnvol_mm3']:.0f} -> {refined['metrics']['fnvol_mm3']:.0f} mm3")
