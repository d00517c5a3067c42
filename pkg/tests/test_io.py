import json
import struct

import numpy as np
import pytest

from clickseg.harness import EvalConfig, evaluate_cohort
from clickseg.io import (
    NiftiFormatError,
    UnsupportedNiftiFeatureError,
    discover_cases,
    load_case,
    read_config,
    read_nifti,
    read_nifti_mask,
    read_prompts,
    read_report,
    write_config,
    write_nifti,
    write_prompts,
    write_report,
)
from clickseg.phantom import make_phantom_cohort, write_phantom_dataset
from clickseg.prompts import ClickSet
from clickseg.simulate import SimConfig
from clickseg.volume import MaskVolume, Spacing, Volume3

SPACING = Spacing(3.0, 2.04, 2.04)


@pytest.mark.parametrize("dtype", [np.uint8, np.int16, np.uint16, np.float32, np.float64])
def test_nifti_round_trip_all_dtypes(tmp_path, dtype):
    rng = np.random.default_rng(70)
    if np.issubdtype(dtype, np.integer):
        info = np.iinfo(dtype)
        data = rng.integers(max(info.min, -3000), min(info.max, 3000), size=(5, 6, 7)).astype(dtype)
        if dtype == np.uint8:
            data = (data % 2).astype(np.uint8)  # keep it a valid mask payload
    else:
        data = rng.standard_normal((5, 6, 7)).astype(dtype)
    v = Volume3(data, SPACING, origin=(1.5, -2.0, 3.25))
    path = tmp_path / "vol.nii.gz"
    write_nifti(v, path, dtype=dtype)
    back = read_nifti(path)
    assert back.shape == v.shape
    assert back.spacing.as_tuple() == pytest.approx(v.spacing.as_tuple(), rel=1e-6)
    assert back.origin == pytest.approx(v.origin, abs=1e-5)
    # values survive exactly (int16/uint16 widen to float32, which is exact)
    assert np.array_equal(back.data.astype(dtype), data)
    # and a second write/read is byte-stable
    write_nifti(back, tmp_path / "vol2.nii.gz", dtype=dtype)
    again = read_nifti(tmp_path / "vol2.nii.gz")
    assert np.array_equal(again.data, back.data)


def test_nifti_uncompressed_and_deterministic_bytes(tmp_path):
    v = Volume3(np.arange(24, dtype=np.float32).reshape(2, 3, 4), Spacing(1, 1, 1))
    write_nifti(v, tmp_path / "a.nii")
    write_nifti(v, tmp_path / "b.nii")
    assert (tmp_path / "a.nii").read_bytes() == (tmp_path / "b.nii").read_bytes()
    write_nifti(v, tmp_path / "a.nii.gz")
    write_nifti(v, tmp_path / "b.nii.gz")
    assert (tmp_path / "a.nii.gz").read_bytes() == (tmp_path / "b.nii.gz").read_bytes()
    assert np.array_equal(read_nifti(tmp_path / "a.nii").data, v.data)


def test_nifti_scl_slope_applied(tmp_path):
    v = Volume3(np.full((2, 2, 2), 3, np.int16).astype(np.float32), Spacing(1, 1, 1))
    path = tmp_path / "scaled.nii"
    write_nifti(v, path, dtype=np.int16)
    raw = bytearray(path.read_bytes())
    struct.pack_into("<2f", raw, 112, 2.0, 1.0)  # scl_slope=2, scl_inter=1
    path.write_bytes(bytes(raw))
    back = read_nifti(path)
    assert np.all(back.data == np.float32(7.0))  # 3 * 2 + 1


def test_nifti_truncated_header(tmp_path):
    path = tmp_path / "short.nii"
    path.write_bytes(b"\x00" * 200)
    with pytest.raises(NiftiFormatError, match="truncated"):
        read_nifti(path)


def test_nifti_bad_magic(tmp_path):
    v = Volume3(np.zeros((2, 2, 2), np.float32), Spacing(1, 1, 1))
    path = tmp_path / "bad.nii"
    write_nifti(v, path)
    raw = bytearray(path.read_bytes())
    raw[344:348] = b"XXX\x00"
    path.write_bytes(bytes(raw))
    with pytest.raises(NiftiFormatError, match="magic"):
        read_nifti(path)


def test_nifti_unsupported_dtype_names_code(tmp_path):
    v = Volume3(np.zeros((2, 2, 2), np.float32), Spacing(1, 1, 1))
    path = tmp_path / "int32.nii"
    write_nifti(v, path)
    raw = bytearray(path.read_bytes())
    struct.pack_into("<h", raw, 70, 8)  # int32 datatype code
    path.write_bytes(bytes(raw))
    with pytest.raises(UnsupportedNiftiFeatureError, match="8"):
        read_nifti(path)


def test_nifti_refuses_lossy_write(tmp_path):
    v = Volume3(np.array([[[0.5, 2.0]]], np.float64), Spacing(1, 1, 1))
    with pytest.raises(ValueError, match="allow_lossy"):
        write_nifti(v, tmp_path / "lossy.nii", dtype=np.uint8)
    write_nifti(v, tmp_path / "lossy.nii", dtype=np.uint8, allow_lossy=True)
    assert read_nifti(tmp_path / "lossy.nii").data.ravel().tolist() == [0, 2]


def test_nifti_mask_round_trip(tmp_path):
    rng = np.random.default_rng(71)
    m = MaskVolume((rng.random((6, 6, 6)) < 0.3).astype(np.uint8), SPACING)
    write_nifti(m, tmp_path / "gt.nii.gz")
    back = read_nifti_mask(tmp_path / "gt.nii.gz")
    assert back.data.dtype == np.uint8
    assert np.array_equal(back.data, m.data)


def test_nifti_big_endian_read(tmp_path):
    # hand-build a minimal big-endian header around little-endian writer output
    v = Volume3(np.arange(8, dtype=np.float32).reshape(2, 2, 2), Spacing(1, 2, 3))
    path = tmp_path / "little.nii"
    write_nifti(v, path)
    raw = path.read_bytes()
    hdr, data = raw[:352], raw[352:]
    fields = struct.unpack("<i", hdr[:4])[0]
    assert fields == 348
    swapped = bytearray(352)
    swapped[:4] = struct.pack(">i", 348)
    swapped[40:56] = struct.pack(">8h", *struct.unpack("<8h", hdr[40:56]))
    swapped[70:74] = struct.pack(">2h", *struct.unpack("<2h", hdr[70:74]))
    swapped[76:108] = struct.pack(">8f", *struct.unpack("<8f", hdr[76:108]))
    swapped[108:120] = struct.pack(">3f", *struct.unpack("<3f", hdr[108:120]))
    swapped[344:348] = b"n+1\x00"
    be_data = np.arange(8, dtype=">f4").reshape(2, 2, 2).tobytes()
    (tmp_path / "big.nii").write_bytes(bytes(swapped) + be_data)
    back = read_nifti(tmp_path / "big.nii")
    assert np.array_equal(back.data, v.data)
    assert back.spacing == v.spacing


def test_prompts_round_trip_voxel(tmp_path):
    grid = Volume3(np.zeros((10, 10, 10), np.float32), SPACING)
    cs = ClickSet.from_positions([(1, 2, 3), (4, 5, 6)], [(7, 8, 9)])
    path = tmp_path / "prompts.json"
    write_prompts(cs, path, case_id="c1", grid=grid)
    back = read_prompts(path, grid)
    assert back == cs
    # byte determinism
    write_prompts(cs, tmp_path / "p2.json", case_id="c1", grid=grid)
    assert path.read_bytes() == (tmp_path / "p2.json").read_bytes()


def test_prompts_empty_lists(tmp_path):
    grid = Volume3(np.zeros((4, 4, 4), np.float32), SPACING)
    path = tmp_path / "empty.json"
    write_prompts(ClickSet(), path, grid=grid)
    assert read_prompts(path, grid) == ClickSet()


def test_prompts_world_space_voxel_center(tmp_path):
    grid = Volume3(np.zeros((8, 8, 8), np.float32), SPACING, origin=(10.0, -4.0, 2.0))
    world = [
        [10.0 + 2 * 3.0, -4.0 + 3 * 2.04, 2.0 + 5 * 2.04],  # exactly voxel (2, 3, 5)
    ]
    path = tmp_path / "world.json"
    path.write_text(json.dumps({
        "format_version": 1, "case_id": "w", "space": "world",
        "foreground": world, "background": [],
    }))
    cs = read_prompts(path, grid)
    assert cs.foreground[0].pos == (2, 3, 5)


def test_prompts_out_of_bounds_names_click(tmp_path):
    grid = Volume3(np.zeros((4, 4, 4), np.float32), SPACING)
    path = tmp_path / "oob.json"
    path.write_text(json.dumps({
        "format_version": 1, "space": "voxel",
        "foreground": [[-1, 0, 0]], "background": [],
    }))
    with pytest.raises(ValueError, match="foreground click 0"):
        read_prompts(path, grid)


def test_prompts_non_integer_voxel_coordinates(tmp_path):
    grid = Volume3(np.zeros((4, 4, 4), np.float32), SPACING)
    path = tmp_path / "frac.json"
    path.write_text(json.dumps({
        "format_version": 1, "space": "voxel",
        "foreground": [[1.5, 0, 0]], "background": [],
    }))
    with pytest.raises(ValueError, match="non-integer"):
        read_prompts(path, grid)


def test_prompts_fingerprint_mismatch(tmp_path):
    grid = Volume3(np.zeros((4, 4, 4), np.float32), SPACING)
    path = tmp_path / "fp.json"
    path.write_text(json.dumps({
        "format_version": 1, "space": "voxel",
        "foreground": [], "background": [],
        "grid": {"shape": [9, 9, 9], "spacing": [3.0, 2.04, 2.04]},
    }))
    with pytest.raises(ValueError, match="shape"):
        read_prompts(path, grid)


def test_config_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    cfg = read_config(path)
    assert cfg == EvalConfig()


def test_config_edt_size_two(tmp_path):
    path = tmp_path / "edt2.yaml"
    path.write_text("encoding:\n  kind: edt\n  size: 2\n")
    cfg = read_config(path)
    assert cfg.encoding.kind == "edt"
    assert cfg.encoding.size_vox == 2.0


def test_config_misspelled_key_suggests(tmp_path):
    path = tmp_path / "typo.yaml"
    path.write_text("encoding:\n  kind: gaussian\n  sigmma: 1.0\n")
    with pytest.raises(ValueError, match="did you mean 'sigma'"):
        read_config(path)


def test_config_round_trip_file(tmp_path):
    cfg = EvalConfig(sim=SimConfig(seed=77), workers=3)
    path = tmp_path / "cfg.yaml"
    write_config(cfg, path)
    assert read_config(path) == cfg


def test_report_round_trip(tmp_path):
    cases = make_phantom_cohort(3, base_seed=200)
    report = evaluate_cohort(cases, EvalConfig(sim=SimConfig(seed=4)))
    json_path = tmp_path / "report.json"
    csv_path = tmp_path / "report.csv"
    write_report(report, json_path, csv_path)

    back = read_report(json_path)
    assert back.budgets == report.budgets
    assert back.cohort_rows == report.cohort_rows
    assert back.cohort_auc == report.cohort_auc
    assert [c.case_id for c in back.cases] == [c.case_id for c in report.cases]
    for a, b in zip(back.cases, report.cases):
        assert a.curve.rows == b.curve.rows

    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "case_id,budget,dice,fpvol_mm3,fnvol_mm3"
    assert len(lines) == 1 + len(cases) * len(report.budgets)


def test_report_detects_corrupt_cohort_means(tmp_path):
    cases = make_phantom_cohort(2, base_seed=210)
    report = evaluate_cohort(cases, EvalConfig(sim=SimConfig(seed=4)))
    path = tmp_path / "report.json"
    write_report(report, path)
    obj = json.loads(path.read_text())
    obj["cohort"]["per_budget"][0]["dice"] += 0.25
    path.write_text(json.dumps(obj))
    with pytest.raises(ValueError, match="does not match its rows"):
        read_report(path)


def test_discover_and_load_cases(tmp_path):
    ids = write_phantom_dataset(tmp_path, 2, base_seed=300)
    descs = discover_cases(tmp_path)
    assert [d.case_id for d in descs] == sorted(ids)
    case = load_case(descs[0])
    assert case.gt is not None
    assert case.pet.shape == case.gt.shape
    assert discover_cases(tmp_path / "missing") == []
