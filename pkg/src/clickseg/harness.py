"""Interactive evaluation protocol: prompts -> segmentation -> metrics, per budget.

Each case gets one fixed click sequence; the budget-b evaluation uses its
first b foreground and first b background clicks, so budgets are nested
prefixes the way a user adding clicks would produce them.  Budget 0 is the
backend's pure automatic mode.

Per-case randomness comes from an independent stream derived from
(seed, case_id), and cohort assembly sorts by case id, so reports are
bit-identical regardless of worker count.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .edt import interior_depth
from .metrics import BudgetCurve, CaseMetrics, METRIC_NAMES, auc, dice, fn_volume, fp_volume
from .prompts import BACKGROUND, FOREGROUND, ClickPoint, ClickSet, EncodingSpec, build_prompt_channels
from .segment import SegmenterInput, make_backend, threshold
from .simulate import SimConfig, sample_official_style, simulate_click_sequence
from .volume import MaskVolume, Volume3

__all__ = [
    "EvalConfig",
    "EvalCase",
    "CaseResult",
    "EvalReport",
    "evaluate_case",
    "evaluate_cohort",
    "config_to_dict",
    "config_from_dict",
]

REPORT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EvalConfig:
    """Everything that determines an evaluation run (echoed into reports)."""

    budgets: tuple[int, ...] = (0, 3, 7, 10)
    encoding: EncodingSpec = EncodingSpec.edt(2.0)
    sim: SimConfig = SimConfig()
    backend_name: str = "reference"
    backend_params: dict = field(default_factory=dict)
    prompt_source: str = "simulate"
    click_target: str = "gt"
    threshold: float = 0.5
    connectivity: int = 26
    workers: int = 1
    output_dir: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        b = self.budgets
        if not b or b[0] != 0:
            raise ValueError(f"budgets must contain 0 first, got {b}")
        if any(x >= y for x, y in zip(b, b[1:])) or b[-1] > 10:
            raise ValueError(f"budgets must be strictly increasing within [0, 10], got {b}")
        if self.prompt_source not in ("simulate", "precomputed"):
            raise ValueError(f"prompt_source must be simulate or precomputed, got {self.prompt_source!r}")
        if self.click_target not in ("gt", "errors"):
            raise ValueError(f"click_target must be gt or errors, got {self.click_target!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class EvalCase:
    """A loaded case: PET (plus optional CT), ground truth, optional prompts."""

    case_id: str
    pet: Volume3
    gt: MaskVolume | None = None
    ct: Volume3 | None = None
    prompts: ClickSet | None = None


@dataclass
class CaseResult:
    case_id: str
    curve: BudgetCurve


@dataclass
class EvalReport:
    seed: int
    budgets: list[int]
    config: dict
    cases: list[CaseResult]
    cohort_rows: list[CaseMetrics]
    cohort_auc: dict[str, float]
    toolkit_version: str = __version__
    format_version: int = REPORT_FORMAT_VERSION


def case_rng(seed: int, case_id: str) -> np.random.Generator:
    """Independent, schedule-free stream for one case."""
    digest = hashlib.sha256(case_id.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 8], "little") for i in range(0, 32, 8)]
    return np.random.default_rng(np.random.SeedSequence([seed & (2**64 - 1), *words]))


def _segment_at_budget(case, cfg, backend, clicks: ClickSet) -> MaskVolume:
    fg, bg = build_prompt_channels(
        clicks, cfg.encoding, case.pet.shape, case.pet.spacing, case.pet.origin
    )
    inp = SegmenterInput(
        pet=case.pet, fg_channel=fg, bg_channel=bg, clicks=clicks, ct=case.ct,
        case_id=case.case_id,
    )
    return threshold(backend(inp), cfg.threshold)


def _metrics_row(pred: MaskVolume, gt: MaskVolume, connectivity: int) -> CaseMetrics:
    return CaseMetrics(
        dice=dice(pred, gt),
        fpvol_mm3=fp_volume(pred, gt, connectivity),
        fnvol_mm3=fn_volume(pred, gt, connectivity),
    )


def _deepest_voxel(mask_bool: np.ndarray, spacing) -> tuple[int, int, int]:
    depth = interior_depth(MaskVolume(mask_bool.astype(np.uint8), spacing))
    return tuple(int(c) for c in np.unravel_index(np.argmax(depth.data), mask_bool.shape))


def _error_targeted_clicks(case, cfg, backend, n_per_polarity: int):
    """Greedy error chasing: fg clicks at the deepest voxel of untouched GT
    components, bg clicks inside false-positive components, re-evaluating the
    prediction between budgets.  Produces one nested sequence."""
    from scipy import ndimage

    gt_bool = case.gt.as_bool()
    spacing = case.gt.spacing
    rng = case_rng(cfg.sim.seed, case.case_id)
    fg: list[ClickPoint] = []
    bg: list[ClickPoint] = []
    used: set[tuple[int, int, int]] = set()

    def try_add(pos, polarity, bucket) -> bool:
        if pos is None or pos in used:
            return False
        if (polarity == FOREGROUND) != bool(gt_bool[pos]):
            return False
        used.add(pos)
        bucket.append(ClickPoint(pos, polarity))
        return True

    def official_fallback(polarity):
        picks = sample_official_style(case.gt, 3, polarity, None, rng, cfg.sim)
        return next((p.pos for p in picks if p.pos not in used), None)

    struct26 = ndimage.generate_binary_structure(3, 3)
    while len(fg) < n_per_polarity or len(bg) < n_per_polarity:
        pred = _segment_at_budget(case, cfg, backend, ClickSet(list(fg), list(bg)))
        pred_bool = pred.as_bool()
        progressed = False

        if len(fg) < n_per_polarity and gt_bool.any():
            fn_mask = gt_bool & ~pred_bool
            pos = _deepest_voxel(fn_mask, spacing) if fn_mask.any() else None
            progressed |= try_add(pos, FOREGROUND, fg) or try_add(
                official_fallback(FOREGROUND), FOREGROUND, fg
            )

        if len(bg) < n_per_polarity:
            labels, n = ndimage.label(pred_bool, structure=struct26)
            pos = None
            for label in range(1, n + 1):
                comp = labels == label
                if not (comp & gt_bool).any():
                    pos = _deepest_voxel(comp, spacing)
                    break
            progressed |= try_add(pos, BACKGROUND, bg) or try_add(
                official_fallback(BACKGROUND), BACKGROUND, bg
            )

        if not progressed:  # no distinct candidate left; return fewer clicks
            break
    return ClickSet(fg, bg)


def _click_sequence(case: EvalCase, cfg: EvalConfig, backend) -> ClickSet:
    n = max(cfg.budgets)
    if cfg.prompt_source == "precomputed":
        if case.prompts is None:
            raise ValueError(f"case {case.case_id!r} has no precomputed prompts")
        return case.prompts
    if cfg.click_target == "errors":
        return _error_targeted_clicks(case, cfg, backend, n)
    rng = case_rng(cfg.sim.seed, case.case_id)
    return simulate_click_sequence(case.gt, n, n, cfg.sim, rng)


def evaluate_case(case: EvalCase, cfg: EvalConfig, backend=None) -> BudgetCurve:
    """Run the budget sweep for one case and score each budget against GT."""
    if case.gt is None:
        raise ValueError(f"case {case.case_id!r} has no ground truth; evaluation needs one")
    if not case.pet.same_grid(case.gt):
        raise ValueError(f"case {case.case_id!r}: PET and GT grids differ")
    if backend is None:
        backend = make_backend(cfg.backend_name, cfg.backend_params)

    sequence = _click_sequence(case, cfg, backend)
    rows = []
    for b in cfg.budgets:
        pred = _segment_at_budget(case, cfg, backend, sequence.prefix(b, b))
        rows.append(_metrics_row(pred, case.gt, cfg.connectivity))
    return BudgetCurve(list(cfg.budgets), rows)


def evaluate_cohort(cases: list[EvalCase], cfg: EvalConfig) -> EvalReport:
    """Evaluate every case (optionally in parallel) and aggregate.

    Cohort values are unweighted per-case means per budget; cohort AUC is the
    AUC of the mean curve.  Results do not depend on ``cfg.workers``.
    """
    if not cases:
        raise ValueError("evaluate_cohort needs at least one case")
    backend = make_backend(cfg.backend_name, cfg.backend_params)

    def run(case: EvalCase) -> CaseResult:
        return CaseResult(case.case_id, evaluate_case(case, cfg, backend))

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run, cases))
    else:
        results = [run(c) for c in cases]
    results.sort(key=lambda r: r.case_id)

    cohort_rows = []
    for bi in range(len(cfg.budgets)):
        cohort_rows.append(
            CaseMetrics(
                **{
                    name: float(np.mean([r.curve.rows[bi].value(name) for r in results]))
                    for name in METRIC_NAMES
                }
            )
        )
    cohort_auc = {
        name: auc(list(cfg.budgets), [row.value(name) for row in cohort_rows])
        for name in METRIC_NAMES
    }
    return EvalReport(
        seed=cfg.sim.seed,
        budgets=list(cfg.budgets),
        config=config_to_dict(cfg),
        cases=results,
        cohort_rows=cohort_rows,
        cohort_auc=cohort_auc,
    )


def config_to_dict(cfg: EvalConfig) -> dict:
    """Canonical plain-dict form of a config (report echo, file round trips)."""
    enc: dict = {"kind": cfg.encoding.kind, "use_mm": cfg.encoding.use_mm}
    if cfg.encoding.kind == "gaussian":
        enc["sigma"] = cfg.encoding.sigma_vox
    else:
        enc["size"] = cfg.encoding.size_vox
    sim = asdict(cfg.sim)
    sim["bg_band_vox"] = list(cfg.sim.bg_band_vox)
    return {
        "budgets": list(cfg.budgets),
        "encoding": enc,
        "sim": sim,
        "backend": {"name": cfg.backend_name, "params": dict(cfg.backend_params)},
        "prompt_source": cfg.prompt_source,
        "click_target": cfg.click_target,
        "threshold": cfg.threshold,
        "connectivity": cfg.connectivity,
        "workers": cfg.workers,
        "output_dir": cfg.output_dir,
    }


def _reject_unknown(section: dict, allowed: dict[str, str], where: str) -> None:
    import difflib

    for key in section:
        if key not in allowed:
            hint = difflib.get_close_matches(key, allowed, n=1)
            suffix = f"; did you mean {hint[0]!r}?" if hint else ""
            raise ValueError(f"unknown config key {where}{key!r}{suffix}")


def config_from_dict(raw: dict | None) -> EvalConfig:
    """Build an EvalConfig from a plain mapping, rejecting unknown keys loudly."""
    raw = dict(raw or {})
    raw.pop("format_version", None)
    top = {
        "budgets": "", "encoding": "", "sim": "", "backend": "", "prompt_source": "",
        "click_target": "", "threshold": "", "connectivity": "", "workers": "",
        "output_dir": "",
    }
    _reject_unknown(raw, top, "")

    enc_raw = dict(raw.get("encoding") or {})
    _reject_unknown(enc_raw, {"kind": "", "sigma": "", "size": "", "use_mm": ""}, "encoding.")
    kind = enc_raw.get("kind", "edt")
    if kind == "gaussian":
        if "size" in enc_raw:
            raise ValueError("encoding.size is an edt parameter; gaussian takes encoding.sigma")
        encoding = EncodingSpec.gaussian(
            float(enc_raw.get("sigma", 0.5)), bool(enc_raw.get("use_mm", False))
        )
    else:
        if "sigma" in enc_raw:
            raise ValueError("encoding.sigma is a gaussian parameter; edt takes encoding.size")
        encoding = EncodingSpec.edt(
            float(enc_raw.get("size", 2.0)), bool(enc_raw.get("use_mm", False))
        )

    sim_raw = dict(raw.get("sim") or {})
    sim_fields = {
        "max_clicks_per_polarity": "", "count_law": "", "mix_official_fraction": "",
        "core_weight_exponent": "", "seed": "", "center_fraction": "", "bg_band_vox": "",
        "bg_reach_vox": "",
    }
    _reject_unknown(sim_raw, sim_fields, "sim.")
    if "bg_band_vox" in sim_raw:
        sim_raw["bg_band_vox"] = tuple(float(x) for x in sim_raw["bg_band_vox"])
    sim = SimConfig(**sim_raw)

    backend_raw = dict(raw.get("backend") or {})
    _reject_unknown(backend_raw, {"name": "", "params": ""}, "backend.")

    return EvalConfig(
        budgets=tuple(raw.get("budgets", (0, 3, 7, 10))),
        encoding=encoding,
        sim=sim,
        backend_name=backend_raw.get("name", "reference"),
        backend_params=dict(backend_raw.get("params") or {}),
        prompt_source=raw.get("prompt_source", "simulate"),
        click_target=raw.get("click_target", "gt"),
        threshold=float(raw.get("threshold", 0.5)),
        connectivity=int(raw.get("connectivity", 26)),
        workers=int(raw.get("workers", 1)),
        output_dir=raw.get("output_dir"),
    )
