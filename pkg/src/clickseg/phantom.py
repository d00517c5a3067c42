"""Synthetic PET phantoms for demos and end-to-end evaluation.

Each phantom carries three blob populations on a low-uptake background:

* supra-threshold lesions the automatic mode finds (but under-covers, since
  the ground truth extends below the auto threshold),
* sub-threshold lesions the automatic mode misses entirely (false negatives
  until a foreground click lands on them),
* distractor uptake near lesions with no ground truth at all (false
  positives until a background click suppresses them).

Blobs are super-Gaussian (quartic) bumps: their steep shoulders keep
click-seeded region growing within a voxel or so of the ground truth, so
near-miss background clicks do not clip true lesions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .harness import EvalCase
from .volume import MaskVolume, Spacing, Volume3

__all__ = ["PhantomSpec", "make_phantom", "make_phantom_cohort", "write_phantom_dataset"]


@dataclass(frozen=True)
class PhantomSpec:
    shape: tuple[int, int, int] = (48, 48, 48)
    spacing: Spacing = Spacing(3.0, 2.04, 2.04)
    n_supra: tuple[int, int] = (1, 2)
    n_sub: tuple[int, int] = (1, 1)
    n_distractor: tuple[int, int] = (3, 4)
    background: float = 0.14
    noise: float = 0.08
    # ground-truth iso-levels per lesion blob; both sit below the blob peaks
    gt_supra_level: float = 1.3
    gt_sub_level: float = 0.85
    margin_vox: int = 9
    min_separation_vox: float = 16.0
    distractor_gap_vox: tuple[float, float] = (5.0, 7.5)


def _blob_window(shape, center, scale):
    """Quartic super-Gaussian bump exp(-(r/scale)^4) over a local window."""
    r = int(np.ceil(2.5 * scale))
    lo = [max(0, c - r) for c in center]
    hi = [min(n, c + r + 1) for c, n in zip(center, shape)]
    grids = np.meshgrid(*[np.arange(a, b) for a, b in zip(lo, hi)], indexing="ij")
    d2 = sum((g - c) ** 2 for g, c in zip(grids, center))
    window = tuple(slice(a, b) for a, b in zip(lo, hi))
    return window, np.exp(-((d2 / (scale * scale)) ** 2))


def _place(rng, shape, margin, existing, min_sep, anchor=None, gap=None):
    for _ in range(200):
        if anchor is None:
            cand = np.array([rng.integers(margin, n - margin) for n in shape], dtype=float)
        else:
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            cand = np.asarray(anchor, dtype=float) + direction * gap
            cand = np.round(cand)
            if not all(margin <= c < n - margin for c, n in zip(cand, shape)):
                continue
        others = [e for e in existing if anchor is None or not np.array_equal(e, anchor)]
        if all(np.linalg.norm(cand - np.asarray(e)) >= min_sep for e in others):
            return tuple(int(c) for c in cand)
    return None  # too crowded; the caller simply drops this blob


def make_phantom(seed: int, spec: PhantomSpec = PhantomSpec()) -> EvalCase:
    """Generate one deterministic phantom case (PET + ground truth)."""
    rng = np.random.default_rng(seed)
    shape = spec.shape
    pet = np.full(shape, spec.background, dtype=np.float64)
    pet += rng.uniform(0.0, spec.noise, size=shape)
    gt = np.zeros(shape, dtype=bool)

    centers: list[tuple[int, int, int]] = []

    def add_blob(center, sigma, peak, gt_level=None):
        window, field = _blob_window(shape, center, sigma)
        pet[window] += peak * field
        if gt_level is not None:
            gt[window] |= peak * field >= gt_level
        centers.append(center)

    def gt_radius(scale, peak, level):
        return scale * np.log(peak / level) ** 0.25

    lesions = []  # (center, gt radius in voxels) for distractor anchoring
    n_supra = int(rng.integers(spec.n_supra[0], spec.n_supra[1] + 1))
    for _ in range(n_supra):
        center = _place(rng, shape, spec.margin_vox, centers, spec.min_separation_vox)
        if center is None:
            continue
        scale = rng.uniform(2.0, 2.6)
        peak = rng.uniform(5.0, 8.0)
        add_blob(center, scale, peak, spec.gt_supra_level)
        lesions.append((center, gt_radius(scale, peak, spec.gt_supra_level)))

    n_sub = int(rng.integers(spec.n_sub[0], spec.n_sub[1] + 1))
    for _ in range(n_sub):
        center = _place(rng, shape, spec.margin_vox, centers, spec.min_separation_vox)
        if center is None:
            continue
        scale = rng.uniform(2.2, 2.8)
        peak = rng.uniform(1.8, 2.2)
        add_blob(center, scale, peak, spec.gt_sub_level)
        lesions.append((center, gt_radius(scale, peak, spec.gt_sub_level)))

    # One bulky distractor (kept far enough out that click-seeded growth
    # cannot bridge into it) plus a few medium ones closer in.
    n_distract = int(rng.integers(spec.n_distractor[0], spec.n_distractor[1] + 1))
    for i in range(n_distract):
        anchor, anchor_r = lesions[int(rng.integers(len(lesions)))]
        if i == 0:
            scale = rng.uniform(3.4, 4.0)
            gap = anchor_r + rng.uniform(8.0, 9.5)
        else:
            scale = rng.uniform(2.3, 2.9)
            gap = anchor_r + rng.uniform(*spec.distractor_gap_vox)
        center = _place(
            rng, shape, spec.margin_vox, centers, 0.75 * spec.min_separation_vox,
            anchor=anchor, gap=gap,
        )
        if center is None:
            continue
        add_blob(center, scale, rng.uniform(5.0, 7.5), gt_level=None)

    spacing = spec.spacing
    return EvalCase(
        case_id=f"phantom-{seed:04d}",
        pet=Volume3(pet.astype(np.float32), spacing),
        gt=MaskVolume(gt.astype(np.uint8), spacing),
    )


def make_phantom_cohort(
    n_cases: int, base_seed: int = 0, spec: PhantomSpec = PhantomSpec()
) -> list[EvalCase]:
    return [make_phantom(base_seed + i, spec) for i in range(n_cases)]


def write_phantom_dataset(
    root, n_cases: int, base_seed: int = 0, spec: PhantomSpec = PhantomSpec()
) -> list[str]:
    """Materialize a phantom cohort as a directory-per-case NIfTI dataset."""
    from .io import write_nifti

    root = Path(root)
    ids = []
    for case in make_phantom_cohort(n_cases, base_seed, spec):
        case_dir = root / case.case_id
        case_dir.mkdir(parents=True, exist_ok=True)
        write_nifti(case.pet, case_dir / "pet.nii.gz")
        write_nifti(case.gt, case_dir / "gt.nii.gz")
        ids.append(case.case_id)
    return ids
