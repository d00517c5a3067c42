"""Core 3D volume type and grid operations.

Every array in this package is a dense scalar grid in z-major ``(z, y, x)``
order with a physical voxel spacing in millimeters.  Operations here are pure:
they never mutate their inputs and always return new volumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Spacing",
    "Volume3",
    "MaskVolume",
    "CtNormScheme",
    "resample",
    "normalize_ct",
    "extract_patch",
    "misalign",
    "sample_misalignment_mm",
    "sample_patch_center",
]


@dataclass(frozen=True)
class Spacing:
    """Millimeters per voxel along (z, y, x). All components positive and finite."""

    dz: float
    dy: float
    dx: float

    def __post_init__(self):
        for name in ("dz", "dy", "dx"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"spacing.{name} must be positive and finite, got {v!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.dz, self.dy, self.dx)

    def as_array(self) -> np.ndarray:
        return np.array([self.dz, self.dy, self.dx], dtype=np.float64)

    @property
    def voxel_volume_mm3(self) -> float:
        return self.dz * self.dy * self.dx


@dataclass
class Volume3:
    """A dense 3D scalar grid with voxel spacing and a world-space origin.

    ``data`` has shape ``(nz, ny, nx)``.  Images and probability maps are
    float arrays; masks are uint8 (see :class:`MaskVolume`).  ``origin`` is
    the world position (mm, z/y/x order) of voxel (0, 0, 0).
    """

    data: np.ndarray
    spacing: Spacing
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {self.data.shape}")
        if min(self.data.shape) < 1:
            raise ValueError(f"volume shape components must be >= 1, got {self.data.shape}")
        self.origin = tuple(float(c) for c in self.origin)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def same_grid(self, other: "Volume3") -> bool:
        return self.shape == other.shape and self.spacing == other.spacing

    def with_data(self, data: np.ndarray) -> "Volume3":
        """New Volume3 on this volume's grid carrying ``data``."""
        return Volume3(data, self.spacing, self.origin, dict(self.meta))

    def in_bounds(self, pos) -> bool:
        return all(0 <= int(p) < n for p, n in zip(pos, self.shape))


class MaskVolume(Volume3):
    """A Volume3 whose voxels are exactly 0 or 1, stored as uint8."""

    def __post_init__(self):
        super().__post_init__()
        data = self.data
        if data.dtype != np.uint8:
            if not np.isin(data, (0, 1)).all():
                raise ValueError("mask voxels must all be 0 or 1")
            data = data.astype(np.uint8)
        elif data.max(initial=0) > 1:
            raise ValueError("mask voxels must all be 0 or 1")
        self.data = data

    def as_bool(self) -> np.ndarray:
        return self.data.astype(bool)


@dataclass(frozen=True)
class CtNormScheme:
    """Clip-then-affine CT intensity normalization.

    Defaults are explicit, reproducible constants (clip to [-1024, 1024],
    zero mean, std 250 HU); the dataset-derived statistics of a trained
    pipeline are intentionally not baked in.
    """

    clip_lo: float = -1024.0
    clip_hi: float = 1024.0
    mean: float = 0.0
    std: float = 250.0

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError(f"std must be > 0, got {self.std}")
        if not self.clip_lo < self.clip_hi:
            raise ValueError(f"clip_lo must be < clip_hi, got [{self.clip_lo}, {self.clip_hi}]")


def _output_shape(shape, spacing: Spacing, target: Spacing) -> tuple[int, int, int]:
    # round-half-up on shape * in_spacing / target_spacing, clamped to >= 1
    out = []
    for n, s_in, s_out in zip(shape, spacing.as_tuple(), target.as_tuple()):
        out.append(max(1, int(math.floor(n * s_in / s_out + 0.5))))
    return tuple(out)


def _gather_trilinear(data: np.ndarray, coords: list[np.ndarray], oob_value=None) -> np.ndarray:
    """Sample ``data`` at fractional (z, y, x) coordinate grids.

    ``oob_value=None`` clamps to the edge (values stay inside the input
    range); otherwise sample points outside [0, n-1] on any axis are filled
    with ``oob_value``.
    """
    nz, ny, nx = data.shape
    oob = None
    if oob_value is not None:
        oob = np.zeros(coords[0].shape, dtype=bool)
        for c, n in zip(coords, data.shape):
            oob |= (c < 0) | (c > n - 1)

    idx0, frac = [], []
    for c, n in zip(coords, data.shape):
        c = np.clip(c, 0.0, n - 1)
        i0 = np.floor(c).astype(np.intp)
        np.minimum(i0, n - 2 if n > 1 else 0, out=i0)
        idx0.append(i0)
        frac.append(c - i0)

    z0, y0, x0 = idx0
    fz, fy, fx = frac
    z1 = np.minimum(z0 + 1, nz - 1)
    y1 = np.minimum(y0 + 1, ny - 1)
    x1 = np.minimum(x0 + 1, nx - 1)

    out = (
        data[z0, y0, x0] * ((1 - fz) * (1 - fy) * (1 - fx))
        + data[z0, y0, x1] * ((1 - fz) * (1 - fy) * fx)
        + data[z0, y1, x0] * ((1 - fz) * fy * (1 - fx))
        + data[z0, y1, x1] * ((1 - fz) * fy * fx)
        + data[z1, y0, x0] * (fz * (1 - fy) * (1 - fx))
        + data[z1, y0, x1] * (fz * (1 - fy) * fx)
        + data[z1, y1, x0] * (fz * fy * (1 - fx))
        + data[z1, y1, x1] * (fz * fy * fx)
    )
    if oob is not None:
        out[oob] = oob_value
    return out


def _gather_nearest(data: np.ndarray, coords: list[np.ndarray]) -> np.ndarray:
    idx = []
    for c, n in zip(coords, data.shape):
        i = np.floor(c + 0.5).astype(np.intp)
        idx.append(np.clip(i, 0, n - 1))
    return data[idx[0], idx[1], idx[2]]


def resample(v: Volume3, target: Spacing, mode: str = "trilinear") -> Volume3:
    """Resample a volume onto a new spacing.

    Output voxel ``i`` samples the input at coordinate ``i * target / source``
    (voxel-center convention with index 0 anchored), so the world origin and
    extent are preserved.  Masks must use ``mode="nearest"``.
    """
    if mode not in ("trilinear", "nearest"):
        raise ValueError(f"mode must be 'trilinear' or 'nearest', got {mode!r}")
    if isinstance(v, MaskVolume) and mode != "nearest":
        raise ValueError("mask volumes must be resampled with mode='nearest'")

    out_shape = _output_shape(v.shape, v.spacing, target)
    ratios = [t / s for t, s in zip(target.as_tuple(), v.spacing.as_tuple())]
    axes = [np.arange(n, dtype=np.float64) * r for n, r in zip(out_shape, ratios)]
    coords = list(np.meshgrid(*axes, indexing="ij", copy=False))

    if mode == "nearest":
        out = _gather_nearest(v.data, coords)
    else:
        out = _gather_trilinear(v.data.astype(np.float64, copy=False), coords)
        out = out.astype(v.data.dtype if v.data.dtype.kind == "f" else np.float32)

    if isinstance(v, MaskVolume):
        return MaskVolume(out, target, v.origin, dict(v.meta))
    return Volume3(out, target, v.origin, dict(v.meta))


def normalize_ct(v: Volume3, scheme: CtNormScheme = CtNormScheme()) -> Volume3:
    """Clamp to [clip_lo, clip_hi], subtract mean, divide by std, voxelwise."""
    data = np.clip(v.data.astype(np.float32, copy=False), scheme.clip_lo, scheme.clip_hi)
    out = (data - np.float32(scheme.mean)) / np.float32(scheme.std)
    return v.with_data(out)


def extract_patch(
    v: Volume3,
    center: tuple[int, int, int],
    size: tuple[int, int, int] = (192, 192, 192),
    pad_value: float = 0.0,
) -> tuple[Volume3, tuple[int, int, int]]:
    """Extract a fixed-size patch centered at a voxel, padding outside the source.

    Returns ``(patch, offset)`` where ``offset`` is the source index of patch
    voxel (0, 0, 0): a source coordinate ``s`` maps to patch coordinate
    ``s - offset``.
    """
    center = tuple(int(c) for c in center)
    if not v.in_bounds(center):
        raise ValueError(f"patch center {center} outside volume of shape {v.shape}")
    size = tuple(int(s) for s in size)

    corner = tuple(c - s // 2 for c, s in zip(center, size))
    out = np.full(size, pad_value, dtype=v.data.dtype)

    src_lo = [max(0, c) for c in corner]
    src_hi = [min(n, c + s) for n, c, s in zip(v.shape, corner, size)]
    dst_lo = [sl - c for sl, c in zip(src_lo, corner)]
    dst_hi = [dl + (sh - sl) for dl, sl, sh in zip(dst_lo, src_lo, src_hi)]
    if all(sh > sl for sl, sh in zip(src_lo, src_hi)):
        out[dst_lo[0]:dst_hi[0], dst_lo[1]:dst_hi[1], dst_lo[2]:dst_hi[2]] = \
            v.data[src_lo[0]:src_hi[0], src_lo[1]:src_hi[1], src_lo[2]:src_hi[2]]

    origin = tuple(o + c * s for o, c, s in zip(v.origin, corner, v.spacing.as_tuple()))
    patch = Volume3(out, v.spacing, origin, dict(v.meta))
    if isinstance(v, MaskVolume):
        patch = MaskVolume(out, v.spacing, origin, dict(v.meta))
    return patch, corner


def misalign(pet: Volume3, offset_mm: tuple[float, float, float], mode: str = "trilinear") -> Volume3:
    """Rigidly translate PET content by ``offset_mm`` on its own grid.

    Positive offsets move structures toward increasing indices.  Voxels whose
    sample point falls outside the original field of view are filled with the
    PET minimum.  The paired CT is untouched by construction: only the PET
    volume passes through here.
    """
    if mode != "trilinear":
        raise ValueError(f"only trilinear misalignment is supported, got {mode!r}")
    off = [float(o) for o in offset_mm]
    if not all(math.isfinite(o) for o in off):
        raise ValueError(f"offset must be finite, got {offset_mm}")

    off_vox = [o / s for o, s in zip(off, pet.spacing.as_tuple())]
    if all(o == 0.0 for o in off_vox):
        return pet.with_data(pet.data.copy())

    fill = float(pet.data.min())
    axes = [np.arange(n, dtype=np.float64) - o for n, o in zip(pet.shape, off_vox)]
    coords = list(np.meshgrid(*axes, indexing="ij", copy=False))
    out = _gather_trilinear(pet.data.astype(np.float64, copy=False), coords, oob_value=fill)
    return pet.with_data(out.astype(np.float32))


def sample_misalignment_mm(rng: np.random.Generator, max_abs_mm: float = 6.0) -> tuple[float, float, float]:
    """Draw a PET-CT misalignment offset, uniform in [-max, max] mm per axis.

    The default magnitude is on the order of one PET voxel.
    """
    return tuple(float(o) for o in rng.uniform(-max_abs_mm, max_abs_mm, size=3))


def sample_patch_center(
    shape: tuple[int, int, int],
    rng: np.random.Generator,
    fg_mask: np.ndarray | None = None,
    fg_prob: float = 0.33,
) -> tuple[int, int, int]:
    """Pick a patch center: with probability ``fg_prob`` a foreground voxel
    (when a nonempty mask is given), otherwise uniform over the volume."""
    if fg_mask is not None and fg_mask.any() and rng.random() < fg_prob:
        flat = np.flatnonzero(fg_mask)
        pick = flat[rng.integers(len(flat))]
        return tuple(int(c) for c in np.unravel_index(pick, shape))
    return tuple(int(rng.integers(n)) for n in shape)
