"""File formats: NIfTI-1 volumes, prompts JSON, config files, reports.

The NIfTI support is a deliberately small, loud subset: single-file NIfTI-1
(.nii / .nii.gz), scalar 3D images, dtypes uint8 / int16 / uint16 / float32 /
float64, slope/intercept scaling.  Anything detected beyond that raises
instead of guessing.  Data is reordered to the package-wide z-major (z, y, x)
layout; orientation fields beyond axis order are recorded in ``meta`` but
never resliced.
"""

from __future__ import annotations

import csv
import gzip
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .harness import (
    CaseResult,
    EvalCase,
    EvalConfig,
    EvalReport,
    config_from_dict,
    config_to_dict,
)
from .metrics import BudgetCurve, CaseMetrics, METRIC_NAMES
from .prompts import ClickSet
from .volume import MaskVolume, Spacing, Volume3, resample

__all__ = [
    "NiftiFormatError",
    "UnsupportedNiftiFeatureError",
    "read_nifti",
    "read_nifti_mask",
    "write_nifti",
    "read_prompts",
    "write_prompts",
    "read_config",
    "write_config",
    "write_report",
    "read_report",
    "CaseDescriptor",
    "discover_cases",
    "load_case",
]

PROMPTS_FORMAT_VERSION = 1
CONFIG_FORMAT_VERSION = 1

_HDR_SIZE = 348
_MAGIC_SINGLE = b"n+1\x00"
_MAGIC_PAIR = b"ni1\x00"

# NIfTI-1 datatype codes for the supported subset
_DTYPE_FOR_CODE = {
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    16: np.dtype(np.float32),
    64: np.dtype(np.float64),
    512: np.dtype(np.uint16),
}
_CODE_FOR_DTYPE = {v: k for k, v in _DTYPE_FOR_CODE.items()}


class NiftiFormatError(Exception):
    """The file is not a NIfTI-1 volume this reader can parse."""


class UnsupportedNiftiFeatureError(NiftiFormatError):
    """Valid NIfTI-1, but uses a feature outside the supported subset."""


def _read_bytes(path) -> bytes:
    with open(path, "rb") as f:
        head = f.read(2)
        f.seek(0)
        if head == b"\x1f\x8b":
            with gzip.open(f) as gz:
                return gz.read()
        return f.read()


def read_nifti(path) -> Volume3:
    """Read a single-file NIfTI-1 volume into the canonical (z, y, x) layout.

    Applies scl_slope/scl_inter when the slope is meaningful (nonzero and not
    the identity), widens int16/uint16 to float32, and keeps uint8 integral so
    masks survive round trips.
    """
    raw = _read_bytes(path)
    if len(raw) < _HDR_SIZE:
        raise NiftiFormatError(f"{path}: truncated header ({len(raw)} bytes < {_HDR_SIZE})")

    bo = "<"
    if struct.unpack_from("<i", raw, 0)[0] != _HDR_SIZE:
        if struct.unpack_from(">i", raw, 0)[0] == _HDR_SIZE:
            bo = ">"
        else:
            raise NiftiFormatError(f"{path}: sizeof_hdr is not 348; not a NIfTI-1 file")

    magic = raw[344:348]
    if magic == _MAGIC_PAIR:
        raise UnsupportedNiftiFeatureError(f"{path}: two-file (.hdr/.img) NIfTI is not supported")
    if magic != _MAGIC_SINGLE:
        raise NiftiFormatError(f"{path}: bad magic {magic!r}")

    dim = struct.unpack_from(bo + "8h", raw, 40)
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise NiftiFormatError(f"{path}: invalid dim[0] = {ndim}")
    if any(d > 1 for d in dim[4 : ndim + 1]):
        raise UnsupportedNiftiFeatureError(f"{path}: only scalar 3D volumes are supported")
    nx, ny, nz = (max(1, d) for d in dim[1:4])

    code = struct.unpack_from(bo + "h", raw, 70)[0]
    if code not in _DTYPE_FOR_CODE:
        raise UnsupportedNiftiFeatureError(f"{path}: unsupported NIfTI datatype code {code}")
    dtype = _DTYPE_FOR_CODE[code]

    pixdim = struct.unpack_from(bo + "8f", raw, 76)
    dx, dy, dz = pixdim[1:4]
    if not all(math.isfinite(s) and s > 0 for s in (dx, dy, dz)):
        raise NiftiFormatError(f"{path}: non-positive pixdim {pixdim[1:4]}")

    vox_offset = int(struct.unpack_from(bo + "f", raw, 108)[0])
    if vox_offset < _HDR_SIZE:
        raise NiftiFormatError(f"{path}: vox_offset {vox_offset} inside the header")
    slope, inter = struct.unpack_from(bo + "2f", raw, 112)

    count = nx * ny * nz
    need = vox_offset + count * dtype.itemsize
    if len(raw) < need:
        raise NiftiFormatError(f"{path}: truncated data ({len(raw)} bytes < {need})")
    arr = np.frombuffer(raw, dtype=dtype.newbyteorder(bo), count=count, offset=vox_offset)
    data = np.ascontiguousarray(arr.reshape((nz, ny, nx)).astype(dtype))

    if math.isfinite(slope) and slope != 0.0 and (slope != 1.0 or inter != 0.0):
        out_dtype = np.float64 if dtype == np.float64 else np.float32
        data = (data.astype(out_dtype) * out_dtype(slope)) + out_dtype(inter)
    elif dtype in (np.dtype(np.int16), np.dtype(np.uint16)):
        data = data.astype(np.float32)  # exact: 16-bit ints fit float32

    qb, qc, qd, qox, qoy, qoz = struct.unpack_from(bo + "6f", raw, 256)
    meta = {
        "qform_code": struct.unpack_from(bo + "h", raw, 252)[0],
        "sform_code": struct.unpack_from(bo + "h", raw, 254)[0],
        "quatern": (qb, qc, qd),
        "srow": [list(struct.unpack_from(bo + "4f", raw, off)) for off in (280, 296, 312)],
    }
    return Volume3(data, Spacing(dz, dy, dx), origin=(qoz, qoy, qox), meta=meta)


def read_nifti_mask(path) -> MaskVolume:
    v = read_nifti(path)
    return MaskVolume(v.data, v.spacing, v.origin, v.meta)


def write_nifti(v: Volume3, path, dtype=None, allow_lossy: bool = False) -> None:
    """Write a single-file NIfTI-1 volume (gzipped when the path ends in .gz).

    Refuses value-changing dtype conversions unless ``allow_lossy`` is set.
    """
    dtype = np.dtype(dtype) if dtype is not None else v.data.dtype
    if dtype not in _CODE_FOR_DTYPE:
        raise UnsupportedNiftiFeatureError(f"cannot write dtype {dtype}; supported: "
                                           f"{sorted(str(d) for d in _CODE_FOR_DTYPE)}")
    cast = np.ascontiguousarray(v.data).astype(dtype)
    if not allow_lossy:
        back = cast.astype(v.data.dtype)
        if v.data.dtype.kind == "f" and dtype.kind == "f":
            same = np.array_equal(back, v.data, equal_nan=True)
        else:
            same = np.array_equal(back, v.data)
        if not same:
            raise ValueError(
                f"writing {v.data.dtype} data as {dtype} would change values; "
                "pass allow_lossy=True to force"
            )

    nz, ny, nx = v.shape
    dz, dy, dx = v.spacing.as_tuple()
    oz, oy, ox = v.origin

    hdr = bytearray(_HDR_SIZE)
    struct.pack_into("<i", hdr, 0, _HDR_SIZE)
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<h", hdr, 70, _CODE_FOR_DTYPE[dtype])
    struct.pack_into("<h", hdr, 72, dtype.itemsize * 8)
    struct.pack_into("<8f", hdr, 76, 1.0, dx, dy, dz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", hdr, 108, float(_HDR_SIZE + 4))  # vox_offset = 352
    struct.pack_into("<2f", hdr, 112, 0.0, 0.0)  # slope 0: no scaling on read
    struct.pack_into("<2h", hdr, 252, 1, 1)  # qform, sform codes
    struct.pack_into("<6f", hdr, 256, 0.0, 0.0, 0.0, ox, oy, oz)
    struct.pack_into("<4f", hdr, 280, dx, 0.0, 0.0, ox)
    struct.pack_into("<4f", hdr, 296, 0.0, dy, 0.0, oy)
    struct.pack_into("<4f", hdr, 312, 0.0, 0.0, dz, oz)
    hdr[344:348] = _MAGIC_SINGLE

    payload = bytes(hdr) + b"\x00" * 4 + cast.tobytes(order="C")
    path = Path(path)
    if path.suffix == ".gz":
        # filename="" and mtime=0 keep the gzip header byte-deterministic
        with open(path, "wb") as f:
            with gzip.GzipFile(filename="", fileobj=f, mode="wb", mtime=0) as gz:
                gz.write(payload)
    else:
        path.write_bytes(payload)


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


def write_prompts(clicks: ClickSet, path, case_id: str = "", grid: Volume3 | None = None) -> None:
    """Write clicks as voxel-space prompts JSON (deterministic bytes)."""
    obj = {
        "format_version": PROMPTS_FORMAT_VERSION,
        "case_id": case_id,
        "space": "voxel",
        "foreground": [list(p.pos) for p in clicks.foreground],
        "background": [list(p.pos) for p in clicks.background],
    }
    if grid is not None:
        obj["grid"] = {"shape": list(grid.shape), "spacing": list(grid.spacing.as_tuple())}
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_prompts(path, grid: Volume3) -> ClickSet:
    """Read a prompts JSON file and resolve coordinates on ``grid``.

    World-space coordinates are mapped to voxel indices through the grid
    origin and spacing with round-half-away-from-zero; out-of-bounds clicks
    and grid-fingerprint mismatches are rejected.
    """
    with open(path) as f:
        obj = json.load(f)
    allowed = {"format_version", "case_id", "space", "foreground", "background", "grid"}
    unknown = set(obj) - allowed
    if unknown:
        raise ValueError(f"{path}: unknown prompts keys {sorted(unknown)}")
    space = obj.get("space", "voxel")
    if space not in ("voxel", "world"):
        raise ValueError(f"{path}: space must be 'voxel' or 'world', got {space!r}")

    fingerprint = obj.get("grid")
    if fingerprint:
        if tuple(fingerprint.get("shape", ())) != tuple(grid.shape):
            raise ValueError(
                f"{path}: prompts were made for shape {fingerprint.get('shape')}, "
                f"volume has {list(grid.shape)}"
            )
        sp = fingerprint.get("spacing")
        if sp is not None and not np.allclose(sp, grid.spacing.as_tuple(), rtol=1e-6):
            raise ValueError(f"{path}: prompts spacing {sp} does not match volume "
                             f"{list(grid.spacing.as_tuple())}")

    def to_voxel(coord, polarity, index):
        if len(coord) != 3 or not all(math.isfinite(float(c)) for c in coord):
            raise ValueError(f"{path}: {polarity} click {index} is not a finite 3-vector")
        if space == "world":
            vox = [
                _round_half_away((float(c) - o) / s)
                for c, o, s in zip(coord, grid.origin, grid.spacing.as_tuple())
            ]
        else:
            if any(float(c) != int(c) for c in coord):
                raise ValueError(f"{path}: {polarity} click {index} has non-integer "
                                 f"voxel coordinates {coord}")
            vox = [int(c) for c in coord]
        if not all(0 <= c < n for c, n in zip(vox, grid.shape)):
            raise ValueError(f"{path}: {polarity} click {index} at {vox} is outside "
                             f"the grid of shape {list(grid.shape)}")
        return tuple(vox)

    fg = [to_voxel(c, "foreground", i) for i, c in enumerate(obj.get("foreground", []))]
    bg = [to_voxel(c, "background", i) for i, c in enumerate(obj.get("background", []))]
    return ClickSet.from_positions(fg, bg)


def read_config(path) -> EvalConfig:
    """Parse a YAML evaluation config; unknown keys are hard errors."""
    text = Path(path).read_text()
    data = yaml.safe_load(text)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a mapping, got {type(data).__name__}")
    return config_from_dict(data)


def write_config(cfg: EvalConfig, path) -> None:
    payload = {"format_version": CONFIG_FORMAT_VERSION, **config_to_dict(cfg)}
    Path(path).write_text(yaml.safe_dump(payload, sort_keys=True))


def _metrics_dict(m: CaseMetrics) -> dict:
    return {name: m.value(name) for name in METRIC_NAMES}


def report_to_dict(report: EvalReport) -> dict:
    return {
        "format_version": report.format_version,
        "toolkit_version": report.toolkit_version,
        "seed": report.seed,
        "budgets": list(report.budgets),
        "config": report.config,
        "cohort": {
            "per_budget": [
                {"budget": b, **_metrics_dict(row)}
                for b, row in zip(report.budgets, report.cohort_rows)
            ],
            "auc": dict(report.cohort_auc),
        },
        "cases": [
            {
                "case_id": r.case_id,
                "rows": [
                    {"budget": b, **_metrics_dict(row)}
                    for b, row in zip(r.curve.budgets, r.curve.rows)
                ],
                "auc": dict(r.curve.auc),
            }
            for r in report.cases
        ],
    }


def write_report(report: EvalReport, json_path, csv_path=None) -> None:
    """Write the full JSON report and, optionally, the flat per-row CSV."""
    Path(json_path).write_text(json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n")
    if csv_path is not None:
        with open(csv_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["case_id", "budget", *METRIC_NAMES])
            for r in report.cases:
                for b, row in zip(r.curve.budgets, r.curve.rows):
                    w.writerow([r.case_id, b, *(row.value(name) for name in METRIC_NAMES)])


def read_report(path) -> EvalReport:
    """Load a report and verify the cohort means against the per-case rows."""
    with open(path) as f:
        obj = json.load(f)
    budgets = [int(b) for b in obj["budgets"]]

    def row_from(d) -> CaseMetrics:
        return CaseMetrics(**{name: float(d[name]) for name in METRIC_NAMES})

    cases = [
        CaseResult(
            c["case_id"],
            BudgetCurve(budgets, [row_from(d) for d in c["rows"]],
                        {k: float(v) for k, v in c["auc"].items()}),
        )
        for c in obj["cases"]
    ]
    cohort_rows = [row_from(d) for d in obj["cohort"]["per_budget"]]
    for bi, stored in enumerate(cohort_rows):
        for name in METRIC_NAMES:
            vals = [c.curve.rows[bi].value(name) for c in cases]
            recomputed = float(np.mean(vals))
            if abs(recomputed - stored.value(name)) > 1e-12 * max(1.0, abs(stored.value(name))):
                raise ValueError(
                    f"{path}: cohort mean for {name} at budget {budgets[bi]} "
                    f"({stored.value(name)!r}) does not match its rows ({recomputed!r})"
                )
    return EvalReport(
        seed=int(obj["seed"]),
        budgets=budgets,
        config=obj["config"],
        cases=cases,
        cohort_rows=cohort_rows,
        cohort_auc={k: float(v) for k, v in obj["cohort"]["auc"].items()},
        toolkit_version=obj.get("toolkit_version", ""),
        format_version=int(obj.get("format_version", 1)),
    )


@dataclass
class CaseDescriptor:
    """Paths for one on-disk case (directory-per-case layout)."""

    case_id: str
    pet_path: Path
    ct_path: Path | None = None
    gt_path: Path | None = None
    prompts_path: Path | None = None


def _find(directory: Path, stem: str) -> Path | None:
    for suffix in (".nii.gz", ".nii"):
        p = directory / f"{stem}{suffix}"
        if p.exists():
            return p
    return None


def discover_cases(root) -> list[CaseDescriptor]:
    """Scan a dataset directory: one subdirectory per case holding pet.nii[.gz]
    and optional ct / gt volumes and prompts.json."""
    root = Path(root)
    out = []
    if not root.is_dir():
        return out
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        pet = _find(sub, "pet")
        if pet is None:
            continue
        prompts = sub / "prompts.json"
        out.append(
            CaseDescriptor(
                case_id=sub.name,
                pet_path=pet,
                ct_path=_find(sub, "ct"),
                gt_path=_find(sub, "gt"),
                prompts_path=prompts if prompts.exists() else None,
            )
        )
    return out


def load_case(desc: CaseDescriptor) -> EvalCase:
    """Load a case onto the PET grid, resampling CT/GT when spacings differ."""
    pet = read_nifti(desc.pet_path)
    ct = read_nifti(desc.ct_path) if desc.ct_path else None
    gt = read_nifti_mask(desc.gt_path) if desc.gt_path else None

    if ct is not None and ct.spacing != pet.spacing:
        ct = resample(ct, pet.spacing, "trilinear")
    if gt is not None and gt.spacing != pet.spacing:
        gt = resample(gt, pet.spacing, "nearest")
    for name, v in (("ct", ct), ("gt", gt)):
        if v is not None and v.shape != pet.shape:
            raise ValueError(
                f"case {desc.case_id!r}: {name} shape {v.shape} does not match PET {pet.shape}"
            )
    prompts = read_prompts(desc.prompts_path, pet) if desc.prompts_path else None
    return EvalCase(case_id=desc.case_id, pet=pet, gt=gt, ct=ct, prompts=prompts)
