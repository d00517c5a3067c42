"""HTTP API for interactive use: case listing, slice rendering, segmentation.

Segmentation responses depend only on the request body and the on-disk case
data; the only in-memory session state is the last thresholded mask per case,
kept as a convenience so slice requests can composite an overlay.  Masks
travel as run-length encoding over the canonical z-major voxel order, which
is small enough for interactive latency and trivial to decode per slice.
"""

from __future__ import annotations

import io as _io
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field
from PIL import Image

from . import __version__
from .harness import EvalConfig
from .io import discover_cases, load_case
from .metrics import dice, fn_volume, fp_volume
from .prompts import ClickSet, EncodingSpec, build_prompt_channels
from .segment import SegmenterInput, make_backend, threshold

__all__ = ["create_app", "rle_encode", "rle_decode"]

OVERLAY_ALPHA = 0.45
OVERLAY_COLOR = (255, 64, 32)


def rle_encode(mask: np.ndarray) -> list[int]:
    """Run lengths over the flattened z-major array, starting with a zero run."""
    flat = np.asarray(mask).ravel().astype(bool)
    if flat.size == 0:
        return []
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat[0]:  # first run must describe zeros
        counts.insert(0, 0)
    return [int(c) for c in counts]


def rle_decode(counts: list[int], shape) -> np.ndarray:
    total = int(np.prod(shape))
    if sum(counts) != total:
        raise ValueError(f"RLE counts sum to {sum(counts)}, expected {total}")
    out = np.zeros(total, dtype=np.uint8)
    pos = 0
    value = 0
    for c in counts:
        if value:
            out[pos : pos + c] = 1
        pos += c
        value ^= 1
    return out.reshape(shape)


class _CaseStore:
    """Loads cases lazily and shares them read-only across requests."""

    def __init__(self, dataset_dir):
        self.descriptors = {d.case_id: d for d in discover_cases(dataset_dir)}
        self._cases = {}
        self._last_mask = {}
        self._lock = threading.Lock()

    def ids(self):
        return sorted(self.descriptors)

    def get(self, case_id: str):
        if case_id not in self.descriptors:
            raise HTTPException(status_code=404, detail=f"unknown case {case_id!r}")
        with self._lock:
            if case_id not in self._cases:
                self._cases[case_id] = load_case(self.descriptors[case_id])
            return self._cases[case_id]

    def last_mask(self, case_id: str):
        with self._lock:
            return self._last_mask.get(case_id)

    def remember_mask(self, case_id: str, mask: np.ndarray):
        with self._lock:
            self._last_mask[case_id] = mask


class ClicksBody(BaseModel):
    foreground: list[list[int]] = Field(default_factory=list)
    background: list[list[int]] = Field(default_factory=list)


class EncodingBody(BaseModel):
    kind: str = "edt"
    sigma: float | None = None
    size: float | None = None
    use_mm: bool = False


class BackendBody(BaseModel):
    name: str = "reference"
    params: dict = Field(default_factory=dict)


class SegmentRequest(BaseModel):
    clicks: ClicksBody = Field(default_factory=ClicksBody)
    encoding: EncodingBody | None = None
    backend: BackendBody | None = None
    debug: bool = False


def _accepts_json(request: Request) -> bool:
    accept = request.headers.get("accept")
    if not accept:
        return True
    for part in accept.split(","):
        media = part.split(";")[0].strip().lower()
        if media in ("application/json", "application/*", "*/*"):
            return True
    return False


def _encoding_from_body(body: EncodingBody | None, default: EncodingSpec) -> EncodingSpec:
    if body is None:
        return default
    if body.kind == "gaussian":
        return EncodingSpec.gaussian(body.sigma if body.sigma is not None else 0.5, body.use_mm)
    if body.kind == "edt":
        return EncodingSpec.edt(body.size if body.size is not None else 2.0, body.use_mm)
    raise HTTPException(status_code=400, detail=f"unknown encoding kind {body.kind!r}")


def _window_to_u8(plane: np.ndarray, lo: float, hi: float) -> np.ndarray:
    scaled = (plane.astype(np.float64) - lo) / (hi - lo) * 255.0
    return np.clip(scaled, 0.0, 255.0).astype(np.uint8)


def _png_bytes(img: Image.Image) -> bytes:
    buf = _io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def create_app(dataset_dir, cfg: EvalConfig | None = None, frontend_dir=None) -> FastAPI:
    cfg = cfg or EvalConfig()
    store = _CaseStore(dataset_dir)
    app = FastAPI(title="clickseg", version=__version__)
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.get("/api/version")
    def version():
        return {"version": __version__, "name": "clickseg"}

    @app.get("/api/cases")
    def cases(request: Request):
        if not _accepts_json(request):
            raise HTTPException(status_code=406, detail="this endpoint serves application/json")
        out = []
        for case_id in store.ids():
            case = store.get(case_id)
            out.append(
                {
                    "id": case_id,
                    "shape": list(case.pet.shape),
                    "spacing": list(case.pet.spacing.as_tuple()),
                    "has_gt": case.gt is not None,
                    "has_ct": case.ct is not None,
                }
            )
        return out

    @app.get("/api/cases/{case_id}/slice")
    def slice_image(
        case_id: str, axis: int = 0, index: int = 0, channel: str = "pet",
        window: str | None = None,
    ):
        case = store.get(case_id)
        if axis not in (0, 1, 2):
            raise HTTPException(status_code=400, detail="axis must be 0 (z), 1 (y) or 2 (x)")
        if channel not in ("pet", "ct", "overlay"):
            raise HTTPException(status_code=400, detail="channel must be pet, ct or overlay")
        volume = case.ct if channel == "ct" else case.pet
        if channel == "ct" and volume is None:
            raise HTTPException(status_code=404, detail=f"case {case_id!r} has no CT")
        if not 0 <= index < volume.shape[axis]:
            raise HTTPException(status_code=404, detail=f"slice {index} outside axis {axis} "
                                f"of shape {list(volume.shape)}")
        if window is not None:
            try:
                lo, hi = (float(x) for x in window.split(","))
            except ValueError:
                raise HTTPException(status_code=400, detail="window must be 'lo,hi'") from None
            if lo >= hi:
                raise HTTPException(status_code=400, detail="window needs lo < hi")
        else:
            lo, hi = float(volume.data.min()), float(max(volume.data.max(), volume.data.min() + 1))

        plane = np.take(volume.data, index, axis=axis)
        gray = _window_to_u8(plane, lo, hi)
        if channel != "overlay":
            return Response(content=_png_bytes(Image.fromarray(gray, mode="L")),
                            media_type="image/png")

        rgba = np.stack([gray, gray, gray, np.full_like(gray, 255)], axis=-1).astype(np.float64)
        mask = store.last_mask(case_id)
        if mask is not None:
            m = np.take(mask, index, axis=axis).astype(bool)
            for c, value in enumerate(OVERLAY_COLOR):
                rgba[..., c][m] = (1 - OVERLAY_ALPHA) * rgba[..., c][m] + OVERLAY_ALPHA * value
        img = Image.fromarray(rgba.astype(np.uint8), mode="RGBA")
        return Response(content=_png_bytes(img), media_type="image/png")

    @app.post("/api/cases/{case_id}/segment")
    def segment_case(case_id: str, body: SegmentRequest):
        case = store.get(case_id)
        shape = case.pet.shape
        for name, coords in (("foreground", body.clicks.foreground),
                             ("background", body.clicks.background)):
            for i, c in enumerate(coords):
                if len(c) != 3 or not all(0 <= int(v) < n for v, n in zip(c, shape)):
                    raise HTTPException(
                        status_code=422,
                        detail={"error": "click out of bounds", "polarity": name, "index": i,
                                "pos": list(c), "shape": list(shape)},
                    )
        try:
            clicks = ClickSet.from_positions(
                [tuple(int(v) for v in c) for c in body.clicks.foreground],
                [tuple(int(v) for v in c) for c in body.clicks.background],
            )
        except ValueError as e:
            raise HTTPException(status_code=422, detail=str(e)) from None

        encoding = _encoding_from_body(body.encoding, cfg.encoding)
        if body.backend is not None:
            try:
                backend = make_backend(body.backend.name, body.backend.params)
            except ValueError as e:
                raise HTTPException(status_code=400, detail=str(e)) from None
        else:
            backend = make_backend(cfg.backend_name, cfg.backend_params)

        fg, bg = build_prompt_channels(clicks, encoding, shape, case.pet.spacing, case.pet.origin)
        prob = backend(SegmenterInput(pet=case.pet, fg_channel=fg, bg_channel=bg,
                                      clicks=clicks, ct=case.ct, case_id=case_id))
        mask = threshold(prob, cfg.threshold)
        store.remember_mask(case_id, mask.data)

        out = {
            "case_id": case_id,
            "mask_rle": {"shape": list(shape), "counts": rle_encode(mask.data)},
            "voxel_count": int((mask.data != 0).sum()),
        }
        if case.gt is not None:
            out["metrics"] = {
                "dice": dice(mask, case.gt),
                "fpvol_mm3": fp_volume(mask, case.gt, cfg.connectivity),
                "fnvol_mm3": fn_volume(mask, case.gt, cfg.connectivity),
            }
        if body.debug:
            out["slice_counts"] = [int(n) for n in mask.data.reshape(shape[0], -1).sum(axis=1)]
        return out

    frontend = Path(frontend_dir) if frontend_dir else Path("frontend/dist")
    if frontend.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(frontend), html=True), name="ui")
    return app
