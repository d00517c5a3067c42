"""Lesion segmentation metrics: Dice, component-based FP/FN volumes, AUC.

False positive volume is the total physical volume of predicted connected
components that share no voxel with the ground truth; false negative volume
is the mirror image on ground-truth components.  A single overlapping voxel
exonerates a whole component.  Components use 26-connectivity by default
(6/18 available), matching the region growing in :mod:`clickseg.segment`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .volume import MaskVolume

__all__ = [
    "CaseMetrics",
    "BudgetCurve",
    "Component",
    "connected_components",
    "dice",
    "fp_volume",
    "fn_volume",
    "auc",
]


@dataclass(frozen=True)
class CaseMetrics:
    """Dice plus component-based false positive / false negative volumes (mm^3)."""

    dice: float
    fpvol_mm3: float
    fnvol_mm3: float

    def __post_init__(self):
        if not 0.0 <= self.dice <= 1.0:
            raise ValueError(f"dice out of [0, 1]: {self.dice}")
        if self.fpvol_mm3 < 0 or self.fnvol_mm3 < 0:
            raise ValueError("metric volumes must be >= 0")

    def value(self, name: str) -> float:
        return getattr(self, name)


METRIC_NAMES = ("dice", "fpvol_mm3", "fnvol_mm3")


@dataclass
class BudgetCurve:
    """Per-budget metrics for one case, plus the AUC of each metric over budgets."""

    budgets: list[int]
    rows: list[CaseMetrics]
    auc: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.budgets) != len(self.rows):
            raise ValueError("one metrics row per budget is required")
        if any(b1 >= b2 for b1, b2 in zip(self.budgets, self.budgets[1:])) or any(
            b < 0 for b in self.budgets
        ):
            raise ValueError(f"budgets must be strictly increasing and >= 0: {self.budgets}")
        if not self.auc:
            self.auc = {
                name: auc(self.budgets, [r.value(name) for r in self.rows])
                for name in METRIC_NAMES
            }


@dataclass(frozen=True)
class Component:
    label: int
    voxel_count: int
    volume_mm3: float


def _structure(connectivity: int) -> np.ndarray:
    try:
        rank = {6: 1, 18: 2, 26: 3}[connectivity]
    except KeyError:
        raise ValueError(f"connectivity must be 6, 18 or 26, got {connectivity}") from None
    return ndimage.generate_binary_structure(3, rank)


def connected_components(
    mask: MaskVolume, connectivity: int = 26
) -> tuple[np.ndarray, list[Component]]:
    """Label foreground components; labels are dense from 1 in scan order."""
    labels, n = ndimage.label(mask.data != 0, structure=_structure(connectivity))
    counts = np.bincount(labels.ravel(), minlength=n + 1)
    vox = mask.spacing.voxel_volume_mm3
    comps = [Component(i, int(counts[i]), counts[i] * vox) for i in range(1, n + 1)]
    return labels.astype(np.int32), comps


def _check_same_grid(pred: MaskVolume, gt: MaskVolume) -> None:
    if not pred.same_grid(gt):
        raise ValueError(
            f"grid mismatch: pred {pred.shape}@{pred.spacing.as_tuple()} vs "
            f"gt {gt.shape}@{gt.spacing.as_tuple()}"
        )


def dice(pred: MaskVolume, gt: MaskVolume) -> float:
    """2|P∩G| / (|P|+|G|); 1.0 when both masks are empty (perfect agreement)."""
    _check_same_grid(pred, gt)
    p = pred.data != 0
    g = gt.data != 0
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / denom


def _unmatched_volume(a: MaskVolume, b: MaskVolume, connectivity: int) -> float:
    """Total physical volume of components of ``a`` with zero overlap against ``b``."""
    labels, n = ndimage.label(a.data != 0, structure=_structure(connectivity))
    if n == 0:
        return 0.0
    counts = np.bincount(labels.ravel(), minlength=n + 1)
    overlap = np.bincount(labels[b.data != 0].ravel(), minlength=n + 1)
    unmatched = int(counts[1:][overlap[1:] == 0].sum())
    return unmatched * a.spacing.voxel_volume_mm3


def fp_volume(pred: MaskVolume, gt: MaskVolume, connectivity: int = 26) -> float:
    """Volume (mm^3) of predicted components that miss the ground truth entirely."""
    _check_same_grid(pred, gt)
    return _unmatched_volume(pred, gt, connectivity)


def fn_volume(pred: MaskVolume, gt: MaskVolume, connectivity: int = 26) -> float:
    """Volume (mm^3) of ground-truth components the prediction never touches."""
    _check_same_grid(pred, gt)
    return _unmatched_volume(gt, pred, connectivity)


def auc(budgets, values) -> float:
    """Trapezoidal area under values-vs-budgets, normalized by the budget span.

    A constant curve therefore has AUC equal to that constant.
    """
    budgets = [float(b) for b in budgets]
    values = [float(v) for v in values]
    if len(budgets) != len(values):
        raise ValueError("budgets and values must have equal length")
    if len(budgets) < 2:
        raise ValueError("AUC needs at least 2 points")
    if any(b1 >= b2 for b1, b2 in zip(budgets, budgets[1:])):
        raise ValueError(f"budgets must be strictly increasing: {budgets}")
    area = 0.0
    for (b1, v1), (b2, v2) in zip(zip(budgets, values), zip(budgets[1:], values[1:])):
        area += (v1 + v2) / 2.0 * (b2 - b1)
    return area / (budgets[-1] - budgets[0])
