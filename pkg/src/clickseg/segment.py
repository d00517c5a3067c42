"""The promptable-segmenter contract and a deterministic reference backend.

A segmenter maps an image plus prompt channels to a probability map on the
same grid, and must degrade gracefully to a fully automatic segmentation when
no clicks are given.  The reference backend here is a non-learned stand-in
behind that contract: PET thresholding for the automatic mode, click-seeded
region growing for foreground refinement, and whole-component suppression for
background clicks.  Probability levels are flat markers (0.9 auto, 0.95
grown, 0.05 suppressed, 0.0 elsewhere) chosen to straddle the 0.5 decision
threshold and make rule precedence auditable in outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .prompts import ClickSet
from .volume import MaskVolume, Volume3

__all__ = [
    "SegmenterInput",
    "RefSegParams",
    "ReferenceSegmenter",
    "ExternalSegmenter",
    "make_backend",
    "reference_segment",
    "threshold",
    "ensemble",
]

PROB_AUTO = 0.9
PROB_GROWN = 0.95
PROB_SUPPRESSED = 0.05


@dataclass
class SegmenterInput:
    """Everything a promptable backend may look at for one case.

    Prompt channels are pre-rendered; ``clicks`` carries the raw coordinates
    for backends that prefer them.  All volumes share one grid.
    """

    pet: Volume3
    fg_channel: Volume3
    bg_channel: Volume3
    clicks: ClickSet = field(default_factory=ClickSet)
    ct: Volume3 | None = None
    case_id: str | None = None

    def __post_init__(self):
        for name in ("fg_channel", "bg_channel", "ct"):
            v = getattr(self, name)
            if v is not None and not self.pet.same_grid(v):
                raise ValueError(f"{name} grid does not match the PET grid")


@dataclass(frozen=True)
class RefSegParams:
    """Reference backend knobs. Conventions, not claims: the PET auto
    threshold and growth fraction echo common practice and are parameters."""

    auto_threshold: float = 2.5
    grow_fraction: float = 0.41
    min_component_vol_mm3: float = 50.0
    seed_radius_vox: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.grow_fraction < 1.0:
            raise ValueError(f"grow_fraction must be in (0, 1), got {self.grow_fraction}")
        if not np.isfinite(self.auto_threshold):
            raise ValueError("auto_threshold must be finite")


_STRUCT26 = ndimage.generate_binary_structure(3, 3)


def _seed_ball(pos, shape, radius: float) -> np.ndarray:
    """Boolean grid of voxels within Euclidean distance < radius of pos."""
    out = np.zeros(shape, dtype=bool)
    r = int(np.ceil(radius))
    zr = range(max(0, pos[0] - r), min(shape[0], pos[0] + r + 1))
    yr = range(max(0, pos[1] - r), min(shape[1], pos[1] + r + 1))
    xr = range(max(0, pos[2] - r), min(shape[2], pos[2] + r + 1))
    for z in zr:
        for y in yr:
            for x in xr:
                d2 = (z - pos[0]) ** 2 + (y - pos[1]) ** 2 + (x - pos[2]) ** 2
                if d2 < radius * radius:
                    out[z, y, x] = True
    return out


def reference_segment(inp: SegmenterInput, params: RefSegParams = RefSegParams()) -> Volume3:
    """Deterministic click-aware segmentation of the PET volume.

    1. AUTO: connected components of {PET >= auto_threshold} whose physical
       volume reaches ``min_component_vol_mm3`` get probability 0.9.
    2. FG GROWTH: each foreground click floods (26-connectivity) over voxels
       with PET >= grow_fraction * PET(click); the grown region is raised to
       0.95.  The click voxel is always included; a click on PET <= 0 seeds
       only itself.
    3. BG SUPPRESSION: every 26-component of the current {prob >= 0.5} set
       that contains a background click drops to 0.05.
    """
    pet = inp.pet.data
    vox_mm3 = inp.pet.spacing.voxel_volume_mm3
    prob = np.zeros(pet.shape, dtype=np.float32)

    auto = pet >= params.auto_threshold
    if auto.any():
        labels, n = ndimage.label(auto, structure=_STRUCT26)
        counts = np.bincount(labels.ravel(), minlength=n + 1)
        keep = np.flatnonzero(counts * vox_mm3 >= params.min_component_vol_mm3)
        keep = keep[keep > 0]
        if len(keep):
            prob[np.isin(labels, keep)] = PROB_AUTO

    for click in inp.clicks.foreground:
        pos = click.pos
        seed = _seed_ball(pos, pet.shape, params.seed_radius_vox)
        pc = float(pet[pos])
        region = seed.copy()
        if pc > 0:
            eligible = pet >= params.grow_fraction * pc
            labels, n = ndimage.label(eligible, structure=_STRUCT26)
            touched = np.unique(labels[seed])
            touched = touched[touched > 0]
            if len(touched):
                region |= np.isin(labels, touched)
        np.maximum(prob, np.where(region, np.float32(PROB_GROWN), np.float32(0)), out=prob)

    if inp.clicks.background:
        current = prob >= 0.5
        labels, n = ndimage.label(current, structure=_STRUCT26)
        doomed = {int(labels[c.pos]) for c in inp.clicks.background} - {0}
        if doomed:
            prob[np.isin(labels, sorted(doomed))] = PROB_SUPPRESSED

    return inp.pet.with_data(prob)


def threshold(prob: Volume3, t: float = 0.5) -> MaskVolume:
    """Binarize a probability map; voxels exactly at ``t`` are included."""
    if not 0.0 < t < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {t}")
    return MaskVolume((prob.data >= t).astype(np.uint8), prob.spacing, prob.origin)


def ensemble(maps: list[Volume3]) -> Volume3:
    """Voxelwise arithmetic mean of probability maps on identical grids.

    Identical inputs come back bitwise-equal (the mean of equal values is
    that value, which naive float summation would not preserve).
    """
    if not maps:
        raise ValueError("ensemble needs at least one probability map")
    first = maps[0]
    for i, m in enumerate(maps[1:], start=1):
        if not first.same_grid(m):
            raise ValueError(f"probability map {i} grid does not match map 0")
    if all(np.array_equal(m.data, first.data) for m in maps[1:]):
        return first.with_data(first.data.copy())
    stack = np.stack([m.data for m in maps])
    return first.with_data(stack.mean(axis=0))


class ReferenceSegmenter:
    """The built-in backend: :func:`reference_segment` with fixed params."""

    name = "reference"

    def __init__(self, params: RefSegParams = RefSegParams()):
        self.params = params

    def __call__(self, inp: SegmenterInput) -> Volume3:
        return reference_segment(inp, self.params)


class ExternalSegmenter:
    """Serves precomputed probability maps from files, one per case.

    Lets real model outputs run through the same evaluation harness; clicks
    are ignored.  Files live at ``<dir>/<case_id>.nii[.gz]``.
    """

    name = "external"

    def __init__(self, directory: str):
        self.directory = Path(directory)

    def __call__(self, inp: SegmenterInput) -> Volume3:
        from .io import read_nifti  # local import to avoid a module cycle

        if inp.case_id is None:
            raise ValueError("external backend needs a case_id on the segmenter input")
        for suffix in (".nii.gz", ".nii"):
            path = self.directory / f"{inp.case_id}{suffix}"
            if path.exists():
                prob = read_nifti(path)
                if not prob.same_grid(inp.pet):
                    raise ValueError(f"precomputed map grid mismatch for case {inp.case_id}")
                data = prob.data.astype(np.float32, copy=False)
                if data.min() < 0.0 or data.max() > 1.0:
                    raise ValueError(f"precomputed map for {inp.case_id} is not in [0, 1]")
                return inp.pet.with_data(data)
        raise FileNotFoundError(f"no precomputed probability map for case {inp.case_id!r}")


def make_backend(name: str, params: dict | None = None):
    """Backend factory used by config files and the services."""
    params = dict(params or {})
    if name == "reference":
        return ReferenceSegmenter(RefSegParams(**params))
    if name == "external":
        return ExternalSegmenter(**params)
    raise ValueError(f"unknown backend {name!r} (expected 'reference' or 'external')")
