import json

import numpy as np
import pytest

from clickseg.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from clickseg.io import read_nifti, read_report, write_nifti
from clickseg.phantom import write_phantom_dataset
from clickseg.volume import MaskVolume, Spacing


@pytest.fixture()
def dataset(tmp_path):
    root = tmp_path / "data"
    write_phantom_dataset(root, 2, base_seed=500)
    return root


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--help"])
    assert e.value.code == 0
    assert "encode" in capsys.readouterr().out


def test_invalid_flags_exit_64(capsys):
    with pytest.raises(SystemExit) as e:
        main(["evaluate", "--frobnicate"])
    assert e.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["no-such-command"])
    assert e.value.code == EXIT_USAGE


def test_simulate_deterministic_bytes(dataset, tmp_path):
    gt = next(dataset.iterdir()) / "gt.nii.gz"
    out1, out2 = tmp_path / "p1.json", tmp_path / "p2.json"
    assert main(["simulate", "--gt", str(gt), "--seed", "3", "--out", str(out1)]) == EXIT_OK
    assert main(["simulate", "--gt", str(gt), "--seed", "3", "--out", str(out2)]) == EXIT_OK
    assert out1.read_bytes() == out2.read_bytes()


def test_simulate_max_zero_empty_lists(dataset, tmp_path):
    gt = next(dataset.iterdir()) / "gt.nii.gz"
    out = tmp_path / "none.json"
    assert main(["simulate", "--gt", str(gt), "--max-clicks", "0", "--out", str(out)]) == EXIT_OK
    obj = json.loads(out.read_text())
    assert obj["foreground"] == [] and obj["background"] == []


def test_simulate_empty_gt_keeps_bg_possible(tmp_path):
    empty = MaskVolume(np.zeros((10, 10, 10), np.uint8), Spacing(1, 1, 1))
    gt_path = tmp_path / "gt.nii.gz"
    write_nifti(empty, gt_path)
    out = tmp_path / "p.json"
    assert main(["simulate", "--gt", str(gt_path), "--seed", "1",
                 "--fixed-count", "5", "--out", str(out)]) == EXIT_OK
    obj = json.loads(out.read_text())
    assert obj["foreground"] == []
    assert len(obj["background"]) == 5


def test_encode_writes_channels(dataset, tmp_path):
    case_dir = next(dataset.iterdir())
    gt = case_dir / "gt.nii.gz"
    pet = case_dir / "pet.nii.gz"
    prompts = tmp_path / "prompts.json"
    assert main(["simulate", "--gt", str(gt), "--seed", "2", "--fixed-count", "3",
                 "--out", str(prompts)]) == EXIT_OK
    prefix = str(tmp_path / "enc")
    assert main(["encode", "--image", str(pet), "--prompts", str(prompts),
                 "--encoding", "edt", "--size", "2", "--out-prefix", prefix]) == EXIT_OK
    fg = read_nifti(f"{prefix}_fg.nii.gz")
    assert fg.data.max() == pytest.approx(1.0)

    # isolated clicks (disjoint kernel supports): channel sum equals click count
    isolated = tmp_path / "isolated.json"
    isolated.write_text(json.dumps({
        "format_version": 1, "space": "voxel",
        "foreground": [[10, 10, 10], [10, 10, 20], [20, 20, 20]], "background": [],
    }))
    prefix_g = str(tmp_path / "gauss")
    assert main(["encode", "--image", str(pet), "--prompts", str(isolated),
                 "--encoding", "gaussian", "--sigma", "0.5", "--out-prefix", prefix_g]) == EXIT_OK
    fg_g = read_nifti(f"{prefix_g}_fg.nii.gz")
    assert fg_g.data.sum() == pytest.approx(3.0, rel=1e-6)


def test_encode_missing_prompts_file(dataset, tmp_path, capsys):
    pet = next(dataset.iterdir()) / "pet.nii.gz"
    code = main(["encode", "--image", str(pet), "--prompts", str(tmp_path / "nope.json"),
                 "--out-prefix", str(tmp_path / "x")])
    assert code == EXIT_RUNTIME
    assert "error:" in capsys.readouterr().err


def test_evaluate_writes_report(dataset, tmp_path):
    out = tmp_path / "results"
    assert main(["evaluate", str(dataset), "--out", str(out), "--seed", "11"]) == EXIT_OK
    report = read_report(out / "report.json")
    assert report.budgets == [0, 3, 7, 10]
    assert len(report.cases) == 2
    assert (out / "report.csv").exists()


def test_evaluate_budget_flag(dataset, tmp_path):
    out = tmp_path / "results"
    assert main(["evaluate", str(dataset), "--out", str(out),
                 "--budgets", "0,5", "--seed", "11"]) == EXIT_OK
    report = read_report(out / "report.json")
    assert report.budgets == [0, 5]


def test_evaluate_empty_dataset_fails(tmp_path, capsys):
    assert main(["evaluate", str(tmp_path), "--out", str(tmp_path / "o")]) == EXIT_RUNTIME
    assert "no cases" in capsys.readouterr().err


def test_evaluate_broken_case_exit_2(dataset, tmp_path, capsys):
    bad = dataset / "phantom-9999"
    bad.mkdir()
    (bad / "pet.nii.gz").write_bytes(b"not a nifti at all")
    code = main(["evaluate", str(dataset), "--out", str(tmp_path / "o")])
    assert code == EXIT_RUNTIME
    err = capsys.readouterr().err
    assert "phantom-9999" in err


def test_demo_data_command(tmp_path):
    out = tmp_path / "demo"
    assert main(["demo-data", "--out", str(out), "--cases", "2", "--seed", "1"]) == EXIT_OK
    assert len(list(out.iterdir())) == 2


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
