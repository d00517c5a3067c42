"""clickseg: promptable 3D lesion segmentation toolkit.

Click encodings (Gaussian and distance-falloff), online click simulation,
a deterministic promptable reference segmenter, challenge-style metrics
(Dice / FPvol / FNvol with AUC over click budgets), NIfTI-1 I/O, an
evaluation harness, a CLI, and an HTTP service for interactive use.
"""

__version__ = "0.1.0"

from .volume import MaskVolume, Spacing, Volume3  # noqa: F401
from .prompts import ClickPoint, ClickSet, EncodingSpec  # noqa: F401
