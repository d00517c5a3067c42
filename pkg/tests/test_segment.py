import numpy as np
import pytest

from clickseg.metrics import fn_volume, fp_volume
from clickseg.prompts import ClickSet, EncodingSpec, build_prompt_channels
from clickseg.segment import (
    RefSegParams,
    SegmenterInput,
    ensemble,
    make_backend,
    reference_segment,
    threshold,
)
from clickseg.volume import MaskVolume, Spacing, Volume3

SPACING = Spacing(1.0, 1.0, 1.0)


def _input(pet, clicks=None, spacing=SPACING):
    pet_v = Volume3(np.asarray(pet, np.float32), spacing)
    clicks = clicks or ClickSet()
    fg, bg = build_prompt_channels(clicks, EncodingSpec.edt(2.0), pet_v.shape, spacing)
    return SegmenterInput(pet=pet_v, fg_channel=fg, bg_channel=bg, clicks=clicks)


def _hot_blob(shape=(12, 12, 12), center=(6, 6, 6), radius=2.5, value=5.0):
    pet = np.zeros(shape, np.float32)
    zz, yy, xx = np.meshgrid(*(np.arange(n) for n in shape), indexing="ij")
    inside = (zz - center[0]) ** 2 + (yy - center[1]) ** 2 + (xx - center[2]) ** 2 <= radius**2
    pet[inside] = value
    return pet, inside


def test_zero_pet_zero_clicks_gives_zero():
    prob = reference_segment(_input(np.zeros((8, 8, 8))))
    assert np.all(prob.data == 0.0)


def test_auto_mode_finds_large_blob():
    pet, inside = _hot_blob()
    prob = reference_segment(_input(pet))
    assert np.array_equal(prob.data >= 0.5, inside)
    assert np.all(prob.data[inside] == np.float32(0.9))


def test_auto_mode_filters_small_components():
    pet = np.zeros((10, 10, 10), np.float32)
    pet[2, 2, 2] = 9.0  # single voxel, 1 mm^3 < 50 mm^3
    prob = reference_segment(_input(pet))
    assert np.all(prob.data < 0.5)
    # same blob with generous min volume disabled
    prob = reference_segment(_input(pet), RefSegParams(min_component_vol_mm3=0.5))
    assert prob.data[2, 2, 2] == np.float32(0.9)


def test_fg_click_seeds_inclusion():
    pet = np.zeros((8, 8, 8), np.float32)
    clicks = ClickSet.from_positions([(4, 4, 4)], [])
    prob = reference_segment(_input(pet, clicks))
    assert prob.data[4, 4, 4] >= 0.5  # degenerate seed: PET <= 0 keeps just the voxel
    assert int((prob.data >= 0.5).sum()) == 1


def test_fg_click_grows_over_fraction_of_click_value():
    pet = np.zeros((10, 10, 10), np.float32)
    pet[2:8, 2:8, 2:8] = 1.0
    pet[4:6, 4:6, 4:6] = 2.0  # click here: threshold 0.82 keeps the 1.0 shell
    clicks = ClickSet.from_positions([(4, 4, 4)], [])
    prob = reference_segment(_input(pet, clicks))
    grown = prob.data >= 0.5
    assert grown[4, 4, 4]
    assert np.array_equal(grown, pet >= 0.41 * 2.0)
    assert np.all(prob.data[grown] == np.float32(0.95))


def test_bg_click_suppresses_whole_component():
    pet, inside = _hot_blob()
    bg_pos = (6, 6, 6)
    clicks = ClickSet.from_positions([], [bg_pos])
    prob = reference_segment(_input(pet, clicks))
    assert np.all(prob.data[inside] == np.float32(0.05))
    assert np.all(prob.data < 0.5)


def test_bg_click_drops_fpvol_by_component_volume():
    pet = np.zeros((14, 14, 14), np.float32)
    pet[2:6, 2:6, 2:6] = 5.0  # false positive blob (64 voxels > 50 mm^3)
    gt = np.zeros_like(pet, dtype=np.uint8)
    gt[9:12, 9:12, 9:12] = 1
    gt_mask = MaskVolume(gt, SPACING)

    base = threshold(reference_segment(_input(pet)))
    fp0 = fp_volume(base, gt_mask)
    assert fp0 == 64.0

    clicks = ClickSet.from_positions([], [(3, 3, 3)])
    refined = threshold(reference_segment(_input(pet, clicks)))
    fp1 = fp_volume(refined, gt_mask)
    assert fp0 - fp1 == 64.0


def test_fg_click_on_missed_lesion_strictly_lowers_fnvol():
    pet = np.zeros((14, 14, 14), np.float32)
    pet[9:12, 9:12, 9:12] = 2.0  # below auto threshold
    gt = np.zeros_like(pet, dtype=np.uint8)
    gt[9:12, 9:12, 9:12] = 1
    gt_mask = MaskVolume(gt, SPACING)

    base = threshold(reference_segment(_input(pet)))
    fn0 = fn_volume(base, gt_mask)
    assert fn0 == 27.0

    clicks = ClickSet.from_positions([(10, 10, 10)], [])
    refined = threshold(reference_segment(_input(pet, clicks)))
    assert fn_volume(refined, gt_mask) < fn0


def test_rule_order_bg_wins_over_growth():
    pet, inside = _hot_blob()
    clicks = ClickSet.from_positions([(6, 6, 6)], [(6, 6, 7)])
    prob = reference_segment(_input(pet, clicks))
    assert np.all(prob.data < 0.5)  # suppression runs last


def test_segment_contract_zero_clicks_never_errors_and_range():
    rng = np.random.default_rng(40)
    pet = rng.uniform(0, 6, size=(9, 9, 9)).astype(np.float32)
    prob = reference_segment(_input(pet))
    assert prob.data.min() >= 0.0 and prob.data.max() <= 1.0
    assert prob.shape == (9, 9, 9)


def test_segmenter_input_grid_validation():
    pet = Volume3(np.zeros((4, 4, 4), np.float32), SPACING)
    fg = Volume3(np.zeros((4, 4, 4)), SPACING)
    bad = Volume3(np.zeros((5, 5, 5)), SPACING)
    with pytest.raises(ValueError):
        SegmenterInput(pet=pet, fg_channel=fg, bg_channel=bad)


def test_threshold_rules():
    prob = Volume3(np.full((3, 3, 3), 0.9, np.float32), SPACING)
    assert np.all(threshold(prob).data == 1)
    prob = Volume3(np.full((3, 3, 3), 0.05, np.float32), SPACING)
    assert np.all(threshold(prob).data == 0)
    prob = Volume3(np.full((3, 3, 3), 0.5, np.float32), SPACING)
    assert np.all(threshold(prob, 0.5).data == 1)  # boundary included
    with pytest.raises(ValueError):
        threshold(prob, 0.0)


def test_ensemble_rules():
    a = Volume3(np.full((3, 3, 3), 0.2, np.float64), SPACING)
    b = Volume3(np.full((3, 3, 3), 0.8, np.float64), SPACING)
    assert np.all(ensemble([a, b]).data == 0.5)
    assert np.array_equal(ensemble([a]).data, a.data)
    ten = ensemble([a] * 10)
    assert np.array_equal(ten.data, a.data)
    assert np.array_equal(ensemble([a, b]).data, ensemble([b, a]).data)
    with pytest.raises(ValueError):
        ensemble([])
    with pytest.raises(ValueError):
        ensemble([a, Volume3(np.zeros((2, 2, 2)), SPACING)])


def test_backend_factory():
    ref = make_backend("reference", {"auto_threshold": 3.0})
    assert ref.params.auto_threshold == 3.0
    with pytest.raises(ValueError):
        make_backend("neural", {})


def test_external_backend_round_trip(tmp_path):
    from clickseg.io import write_nifti

    pet = Volume3(np.zeros((5, 5, 5), np.float32), SPACING)
    prob = Volume3(np.full((5, 5, 5), 0.75, np.float32), SPACING)
    write_nifti(prob, tmp_path / "case-1.nii.gz")
    backend = make_backend("external", {"directory": str(tmp_path)})
    inp = _input(np.zeros((5, 5, 5)))
    inp.case_id = "case-1"
    out = backend(inp)
    assert np.allclose(out.data, 0.75)
    inp.case_id = "missing"
    with pytest.raises(FileNotFoundError):
        backend(inp)
