"""Online click simulation against a ground-truth mask.

Counts follow a harmonic law that favors few clicks.  Placement mixes two
strategies: an "official-style" sampler that puts foreground clicks at
component centers or borders and background clicks in a near-miss band just
outside the mask, and a "custom" sampler that can hit anywhere inside the
target with probability weighted toward the lesion core.  A Bernoulli draw
per polarity picks between them (official with probability
``mix_official_fraction``, 0.8 by default).

Everything is driven by an explicit numpy Generator, so a fixed seed fully
determines the output regardless of evaluation parallelism.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .edt import DistanceField, EmptySourceError, interior_depth, squared_edt_to_set
from .prompts import BACKGROUND, FOREGROUND, ClickPoint, ClickSet
from .volume import MaskVolume, Spacing

__all__ = [
    "SimConfig",
    "SimTrace",
    "sample_click_count",
    "sample_official_style",
    "sample_custom",
    "simulate_clicks",
    "simulate_click_sequence",
]

_MAX_PLACEMENT_ATTEMPTS = 100  # duplicate-collision cap; afterwards fewer clicks come back


@dataclass(frozen=True)
class SimConfig:
    """Click simulation parameters.

    ``center_fraction`` (the official sampler's center-vs-border split) and
    the background bands are stand-ins for undocumented challenge behavior
    and deliberately configurable.
    """

    max_clicks_per_polarity: int = 10
    count_law: str = "log_favor_few"
    mix_official_fraction: float = 0.8
    core_weight_exponent: float = 1.0
    seed: int = 0
    center_fraction: float = 0.5
    bg_band_vox: tuple[float, float] = (2.0, 10.0)
    bg_reach_vox: float = 10.0

    def __post_init__(self):
        if self.max_clicks_per_polarity < 0:
            raise ValueError("max_clicks_per_polarity must be >= 0")
        if not 0.0 <= self.mix_official_fraction <= 1.0:
            raise ValueError("mix_official_fraction must be in [0, 1]")
        if self.count_law != "log_favor_few":
            raise ValueError(f"unknown count law {self.count_law!r}")
        if not self.core_weight_exponent > 0:
            raise ValueError("core_weight_exponent must be > 0")


@dataclass
class SimTrace:
    """Optional instrumentation: which placement branch each polarity used."""

    official_branches: int = 0
    custom_branches: int = 0
    counts: list[int] = field(default_factory=list)


def sample_click_count(cfg: SimConfig, rng: np.random.Generator) -> int:
    """Draw a click count k in [0, max] with P(k) proportional to 1/(k+1)."""
    kmax = cfg.max_clicks_per_polarity
    if kmax == 0:
        return 0
    weights = 1.0 / (np.arange(kmax + 1) + 1.0)
    return int(rng.choice(kmax + 1, p=weights / weights.sum()))


def _components(mask_bool: np.ndarray) -> tuple[np.ndarray, int]:
    return ndimage.label(mask_bool, structure=ndimage.generate_binary_structure(3, 3))


def _border_voxels(mask_bool: np.ndarray) -> np.ndarray:
    # border = mask voxels with a 6-neighbor that is background or outside
    eroded = ndimage.binary_erosion(
        mask_bool, structure=ndimage.generate_binary_structure(3, 1), border_value=0
    )
    return mask_bool & ~eroded


def _voxel_distance_to(mask_bool: np.ndarray) -> np.ndarray:
    """Distance to the mask measured in voxel steps (unit spacing)."""
    return np.sqrt(squared_edt_to_set(mask_bool, Spacing(1.0, 1.0, 1.0)))


def _pick_flat(rng: np.random.Generator, flat_indices: np.ndarray, shape) -> tuple[int, int, int]:
    pick = flat_indices[rng.integers(len(flat_indices))]
    return tuple(int(c) for c in np.unravel_index(pick, shape))


def _uniform_without_dup(rng, flat_indices: np.ndarray, k: int, shape) -> list[tuple[int, int, int]]:
    take = min(k, len(flat_indices))
    if take == 0:
        return []
    chosen = rng.choice(flat_indices, size=take, replace=False)
    return [tuple(int(c) for c in np.unravel_index(p, shape)) for p in chosen]


def sample_official_style(
    mask: MaskVolume,
    k: int,
    polarity: str,
    depth: DistanceField | None,
    rng: np.random.Generator,
    cfg: SimConfig = SimConfig(),
) -> list[ClickPoint]:
    """Challenge-flavored placement: lesion centers/borders, near-miss background.

    Foreground clicks visit connected components round-robin; each click sits
    at the component's deepest voxel, or (with probability
    ``1 - center_fraction``) at a random border voxel of the same component.
    Background clicks land outside the mask within ``bg_band_vox`` voxel steps
    of its boundary, falling back to any background voxel when that band is
    empty.
    """
    if k <= 0:
        return []
    mask_bool = mask.as_bool()
    shape = mask.shape

    if polarity == BACKGROUND:
        bg = ~mask_bool
        if mask_bool.any():
            d = _voxel_distance_to(mask_bool)
            lo, hi = cfg.bg_band_vox
            band = bg & (d >= lo) & (d <= hi)
            candidates = np.flatnonzero(band) if band.any() else np.flatnonzero(bg)
        else:
            candidates = np.flatnonzero(bg)
        positions = _uniform_without_dup(rng, candidates, k, shape)
        return [ClickPoint(p, BACKGROUND) for p in positions]

    if not mask_bool.any():
        raise EmptySourceError("foreground clicks requested against an empty mask")
    if depth is None:
        depth = interior_depth(mask)

    labels, ncomp = _components(mask_bool)
    border = _border_voxels(mask_bool)
    centers, borders = [], []
    for label in range(1, ncomp + 1):
        comp = labels == label
        masked_depth = np.where(comp, depth.data, -1.0)
        centers.append(tuple(int(c) for c in np.unravel_index(np.argmax(masked_depth), shape)))
        comp_border = np.flatnonzero(border & comp)
        borders.append(comp_border if len(comp_border) else np.flatnonzero(comp))

    out: list[ClickPoint] = []
    used: set[tuple[int, int, int]] = set()
    for i in range(k):
        ci = i % ncomp
        pos = None
        for _ in range(_MAX_PLACEMENT_ATTEMPTS):
            if rng.random() < cfg.center_fraction:
                cand = centers[ci]
            else:
                cand = _pick_flat(rng, borders[ci], shape)
            if cand not in used:
                pos = cand
                break
        if pos is not None:
            used.add(pos)
            out.append(ClickPoint(pos, FOREGROUND))
    return out


def sample_custom(
    mask: MaskVolume,
    k: int,
    polarity: str,
    depth: DistanceField | None,
    cfg: SimConfig,
    rng: np.random.Generator,
) -> list[ClickPoint]:
    """Core-weighted placement: anywhere inside the target, deeper voxels likelier.

    Foreground voxel p is drawn with probability proportional to
    ``depth(p) ** core_weight_exponent``; background clicks are uniform over
    non-mask voxels within ``bg_reach_vox`` voxel steps of the mask (uniform
    anywhere when the mask is empty).
    """
    if k <= 0:
        return []
    mask_bool = mask.as_bool()
    shape = mask.shape

    if polarity == BACKGROUND:
        bg = ~mask_bool
        if mask_bool.any():
            d = _voxel_distance_to(mask_bool)
            near = bg & (d > 0) & (d <= cfg.bg_reach_vox)
            candidates = np.flatnonzero(near) if near.any() else np.flatnonzero(bg)
        else:
            candidates = np.flatnonzero(bg)
        positions = _uniform_without_dup(rng, candidates, k, shape)
        return [ClickPoint(p, BACKGROUND) for p in positions]

    if not mask_bool.any():
        raise EmptySourceError("foreground clicks requested against an empty mask")
    if depth is None:
        depth = interior_depth(mask)

    flat = np.flatnonzero(mask_bool)
    weights = depth.data.ravel()[flat] ** cfg.core_weight_exponent
    probs = weights / weights.sum()

    out: list[ClickPoint] = []
    used: set[tuple[int, int, int]] = set()
    for _ in range(k):
        for _ in range(_MAX_PLACEMENT_ATTEMPTS):
            pos = tuple(int(c) for c in np.unravel_index(rng.choice(flat, p=probs), shape))
            if pos not in used:
                used.add(pos)
                out.append(ClickPoint(pos, FOREGROUND))
                break
    return out


def _place(mask, k, polarity, depth, cfg, rng, trace):
    official = rng.random() < cfg.mix_official_fraction
    if trace is not None:
        if official:
            trace.official_branches += 1
        else:
            trace.custom_branches += 1
    if official:
        return sample_official_style(mask, k, polarity, depth, rng, cfg)
    return sample_custom(mask, k, polarity, depth, cfg, rng)


def simulate_click_sequence(
    mask: MaskVolume,
    n_fg: int,
    n_bg: int,
    cfg: SimConfig,
    rng: np.random.Generator,
    trace: SimTrace | None = None,
) -> ClickSet:
    """Simulate a fixed number of clicks per polarity (the evaluation path).

    An empty mask forces zero foreground clicks; background clicks are still
    placed.  Fewer clicks than requested come back when the mask runs out of
    distinct candidate voxels.
    """
    n_fg = min(n_fg, cfg.max_clicks_per_polarity)
    n_bg = min(n_bg, cfg.max_clicks_per_polarity)
    has_fg = bool((mask.data != 0).any())
    depth = interior_depth(mask) if has_fg and n_fg > 0 else None

    fg: list[ClickPoint] = []
    if n_fg > 0 and has_fg:
        fg = _place(mask, n_fg, FOREGROUND, depth, cfg, rng, trace)
    bg: list[ClickPoint] = []
    if n_bg > 0:
        bg = _place(mask, n_bg, BACKGROUND, depth, cfg, rng, trace)
    return ClickSet(fg, bg)


def simulate_clicks(
    mask: MaskVolume,
    cfg: SimConfig,
    rng: np.random.Generator,
    trace: SimTrace | None = None,
) -> ClickSet:
    """Simulate one training-style interaction: random counts, mixed placement.

    Foreground and background counts are drawn independently from the
    harmonic law, so up to ``2 * max_clicks_per_polarity`` total clicks are
    possible but rare.
    """
    k_fg = sample_click_count(cfg, rng)
    k_bg = sample_click_count(cfg, rng)
    if trace is not None:
        trace.counts.extend([k_fg, k_bg])
    return simulate_click_sequence(mask, k_fg, k_bg, cfg, rng, trace)
