"""Click prompts and their voxel encodings.

A click becomes voxel values through one of two encodings: a unit-volume
Gaussian kernel of standard deviation ``sigma``, or a linear distance falloff
reaching zero at radius ``size``.  Kernels are isotropic in voxel units by
default (``use_mm=True`` switches to physical distances); multiple clicks of
one polarity combine by voxelwise max, which keeps the channel bounded in
[0, 1] regardless of click count.

Rendering places one precomputed stencil per click, so shifting all clicks by
an integer offset shifts the channel bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .volume import Spacing, Volume3

__all__ = [
    "ClickPoint",
    "ClickSet",
    "EncodingSpec",
    "render_gaussian",
    "render_edt",
    "build_prompt_channels",
]

FOREGROUND = "foreground"
BACKGROUND = "background"


@dataclass(frozen=True)
class ClickPoint:
    """One user click: a voxel index (z, y, x) plus its polarity."""

    pos: tuple[int, int, int]
    polarity: str = FOREGROUND

    def __post_init__(self):
        object.__setattr__(self, "pos", tuple(int(c) for c in self.pos))
        if self.polarity not in (FOREGROUND, BACKGROUND):
            raise ValueError(f"polarity must be foreground or background, got {self.polarity!r}")


@dataclass
class ClickSet:
    """Ordered foreground and background clicks for one case."""

    foreground: list[ClickPoint] = field(default_factory=list)
    background: list[ClickPoint] = field(default_factory=list)

    def __post_init__(self):
        for name, wanted in ((FOREGROUND, FOREGROUND), (BACKGROUND, BACKGROUND)):
            points = getattr(self, name)
            seen = set()
            for i, p in enumerate(points):
                if p.polarity != wanted:
                    raise ValueError(f"{name} click {i} has polarity {p.polarity!r}")
                if p.pos in seen:
                    raise ValueError(f"duplicate {name} click position {p.pos}")
                seen.add(p.pos)

    @classmethod
    def from_positions(cls, foreground=(), background=()) -> "ClickSet":
        return cls(
            [ClickPoint(tuple(p), FOREGROUND) for p in foreground],
            [ClickPoint(tuple(p), BACKGROUND) for p in background],
        )

    def prefix(self, n_fg: int, n_bg: int | None = None) -> "ClickSet":
        """First ``n_fg`` foreground and ``n_bg`` background clicks (nested budgets)."""
        if n_bg is None:
            n_bg = n_fg
        return ClickSet(list(self.foreground[:n_fg]), list(self.background[:n_bg]))

    def total(self) -> int:
        return len(self.foreground) + len(self.background)


@dataclass(frozen=True)
class EncodingSpec:
    """How a click becomes voxel values: ``gaussian`` (sigma_vox) or ``edt`` (size_vox)."""

    kind: str
    sigma_vox: float | None = None
    size_vox: float | None = None
    combine: str = "voxelwise-max"
    use_mm: bool = False

    def __post_init__(self):
        if self.kind == "gaussian":
            if self.sigma_vox is None or self.size_vox is not None:
                raise ValueError("gaussian encoding takes sigma_vox only")
            if not self.sigma_vox > 0:
                raise ValueError(f"sigma must be > 0, got {self.sigma_vox}")
        elif self.kind == "edt":
            if self.size_vox is None or self.sigma_vox is not None:
                raise ValueError("edt encoding takes size_vox only")
            if not self.size_vox > 0:
                raise ValueError(f"size must be > 0, got {self.size_vox}")
        else:
            raise ValueError(f"encoding kind must be 'gaussian' or 'edt', got {self.kind!r}")
        if self.combine != "voxelwise-max":
            raise ValueError(f"unsupported combine rule {self.combine!r}")

    @classmethod
    def gaussian(cls, sigma_vox: float, use_mm: bool = False) -> "EncodingSpec":
        return cls("gaussian", sigma_vox=sigma_vox, use_mm=use_mm)

    @classmethod
    def edt(cls, size_vox: float, use_mm: bool = False) -> "EncodingSpec":
        return cls("edt", size_vox=size_vox, use_mm=use_mm)


def _steps(use_mm: bool, spacing: Spacing | None) -> tuple[float, float, float]:
    if not use_mm:
        return (1.0, 1.0, 1.0)
    if spacing is None:
        raise ValueError("use_mm encoding needs a grid spacing")
    return spacing.as_tuple()


def _offset_distances(radius: float, steps) -> tuple[list[np.ndarray], np.ndarray]:
    """Integer offset grids within per-axis reach ``radius`` and their distances."""
    half = [int(math.ceil(radius / s)) for s in steps]
    axes = [np.arange(-h, h + 1, dtype=np.float64) for h in half]
    off = np.meshgrid(*axes, indexing="ij")
    d = np.sqrt((off[0] * steps[0]) ** 2 + (off[1] * steps[1]) ** 2 + (off[2] * steps[2]) ** 2)
    return off, d


def _gaussian_stencil(sigma: float, steps) -> np.ndarray:
    # truncate at 3*sigma, then renormalize the kept mass to exactly 1
    _, d = _offset_distances(3.0 * sigma, steps)
    kernel = np.exp(-(d * d) / (2.0 * sigma * sigma))
    kernel[d > 3.0 * sigma] = 0.0
    return kernel / kernel.sum()


def _edt_stencil(size: float, steps) -> np.ndarray:
    # linear falloff: 1 at the click, 0 at distance >= size (support d < size)
    _, d = _offset_distances(size, steps)
    return np.maximum(0.0, 1.0 - d / size)


def _paint_max(channel: np.ndarray, stencil: np.ndarray, pos) -> None:
    half = [s // 2 for s in stencil.shape]
    src, dst = [], []
    for c, h, n, m in zip(pos, half, channel.shape, stencil.shape):
        lo, hi = c - h, c - h + m
        dst.append(slice(max(0, lo), min(n, hi)))
        src.append(slice(max(0, -lo), m - max(0, hi - n)))
    window = channel[tuple(dst)]
    np.maximum(window, stencil[tuple(src)], out=window)


def _render(positions, stencil: np.ndarray, shape, spacing: Spacing | None, origin) -> Volume3:
    channel = np.zeros(shape, dtype=np.float64)
    for pos in positions:
        _paint_max(channel, stencil, tuple(int(c) for c in pos))
    return Volume3(channel, spacing or Spacing(1.0, 1.0, 1.0), origin)


def render_gaussian(
    positions,
    sigma_vox: float,
    shape: tuple[int, int, int],
    spacing: Spacing | None = None,
    use_mm: bool = False,
    origin=(0.0, 0.0, 0.0),
) -> Volume3:
    """Render clicks as unit-volume Gaussian kernels combined by voxelwise max.

    Each kernel is truncated at radius ``3 * sigma`` and scaled so its voxel
    sum is exactly 1; an interior click therefore contributes unit mass, and a
    click near the border loses the clipped part.
    """
    if not sigma_vox > 0:
        raise ValueError(f"sigma must be > 0, got {sigma_vox}")
    stencil = _gaussian_stencil(float(sigma_vox), _steps(use_mm, spacing))
    return _render(positions, stencil, shape, spacing, origin)


def render_edt(
    positions,
    size_vox: float,
    shape: tuple[int, int, int],
    spacing: Spacing | None = None,
    use_mm: bool = False,
    origin=(0.0, 0.0, 0.0),
) -> Volume3:
    """Render clicks as clipped linear distance falloffs combined by voxelwise max.

    value(p) = max(0, 1 - d(p, click) / size), so the click voxel carries 1.0
    and support ends strictly inside radius ``size``.
    """
    if not size_vox > 0:
        raise ValueError(f"size must be > 0, got {size_vox}")
    stencil = _edt_stencil(float(size_vox), _steps(use_mm, spacing))
    return _render(positions, stencil, shape, spacing, origin)


def build_prompt_channels(
    clicks: ClickSet,
    spec: EncodingSpec,
    shape: tuple[int, int, int],
    spacing: Spacing | None = None,
    origin=(0.0, 0.0, 0.0),
) -> tuple[Volume3, Volume3]:
    """Render the two extra input channels: foreground and background prompts.

    The channels are independent: a position listed under both polarities gets
    a kernel in each.  Out-of-bounds clicks are rejected by polarity and index.
    """
    for name, points in ((FOREGROUND, clicks.foreground), (BACKGROUND, clicks.background)):
        for i, p in enumerate(points):
            if not all(0 <= c < n for c, n in zip(p.pos, shape)):
                raise ValueError(
                    f"{name} click {i} at {p.pos} is outside the grid of shape {tuple(shape)}"
                )
    render = render_gaussian if spec.kind == "gaussian" else render_edt
    param = spec.sigma_vox if spec.kind == "gaussian" else spec.size_vox
    fg = render([p.pos for p in clicks.foreground], param, shape, spacing, spec.use_mm, origin)
    bg = render([p.pos for p in clicks.background], param, shape, spacing, spec.use_mm, origin)
    return fg, bg
