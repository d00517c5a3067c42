"""Command-line entry points.

Exit codes: 0 success, 2 runtime failure, 64 usage error.  Flags mirror
config keys one-to-one and override values from ``--config`` files; every
command is deterministic given its flags and seed, and writes only under the
caller-supplied output paths.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__, io
from .harness import EvalConfig, config_from_dict, config_to_dict, evaluate_cohort
from .prompts import EncodingSpec, build_prompt_channels
from .simulate import SimConfig, simulate_clicks

EXIT_OK = 0
EXIT_RUNTIME = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 64, not argparse's default 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="clickseg", description=__doc__)
    parser.add_argument("--version", action="version", version=f"clickseg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    enc = sub.add_parser("encode", help="render prompt channels for an image + prompts file")
    enc.add_argument("--image", required=True, help="NIfTI volume defining the grid")
    enc.add_argument("--prompts", required=True, help="prompts JSON file")
    enc.add_argument("--encoding", choices=["gaussian", "edt"], default="edt")
    enc.add_argument("--sigma", type=float, default=0.5, help="gaussian standard deviation (voxels)")
    enc.add_argument("--size", type=float, default=2.0, help="edt falloff radius (voxels)")
    enc.add_argument("--use-mm", action="store_true", help="measure kernels in mm instead of voxels")
    enc.add_argument("--out-prefix", required=True, help="writes <prefix>_fg.nii.gz and <prefix>_bg.nii.gz")

    sim = sub.add_parser("simulate", help="simulate clicks against a ground-truth mask")
    sim.add_argument("--gt", required=True, help="ground-truth mask NIfTI")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--max-clicks", type=int, default=10, help="per-polarity click cap")
    sim.add_argument("--mix", type=float, default=0.8, help="official-style placement fraction")
    sim.add_argument("--fixed-count", type=int, default=None,
                     help="place exactly this many clicks per polarity instead of sampling counts")
    sim.add_argument("--out", required=True, help="output prompts JSON path")

    ev = sub.add_parser("evaluate", help="run the interactive evaluation over a dataset")
    ev.add_argument("dataset", help="dataset directory (one subdirectory per case)")
    ev.add_argument("--config", default=None, help="YAML evaluation config")
    ev.add_argument("--out", required=True, help="output directory for report.json / report.csv")
    ev.add_argument("--budgets", default=None, help="comma-separated click budgets, e.g. 0,3,7,10")
    ev.add_argument("--seed", type=int, default=None, help="override sim.seed")
    ev.add_argument("--workers", type=int, default=None, help="parallel case workers")
    ev.add_argument("--backend", default=None, choices=["reference", "external"])

    srv = sub.add_parser("serve", help="serve the HTTP API (and web UI if built)")
    srv.add_argument("dataset", help="dataset directory")
    srv.add_argument("--config", default=None, help="YAML evaluation config")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000)

    demo = sub.add_parser("demo-data", help="write a synthetic phantom dataset")
    demo.add_argument("--out", required=True)
    demo.add_argument("--cases", type=int, default=5)
    demo.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_encode(args) -> int:
    image = io.read_nifti(args.image)
    clicks = io.read_prompts(args.prompts, image)
    if args.encoding == "gaussian":
        spec = EncodingSpec.gaussian(args.sigma, args.use_mm)
    else:
        spec = EncodingSpec.edt(args.size, args.use_mm)
    fg, bg = build_prompt_channels(clicks, spec, image.shape, image.spacing, image.origin)
    io.write_nifti(fg.with_data(fg.data.astype(np.float32)), f"{args.out_prefix}_fg.nii.gz")
    io.write_nifti(bg.with_data(bg.data.astype(np.float32)), f"{args.out_prefix}_bg.nii.gz")
    print(f"wrote {args.out_prefix}_fg.nii.gz and {args.out_prefix}_bg.nii.gz")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    gt = io.read_nifti_mask(args.gt)
    cfg = SimConfig(max_clicks_per_polarity=args.max_clicks, mix_official_fraction=args.mix,
                    seed=args.seed)
    rng = np.random.default_rng(args.seed)
    if args.fixed_count is not None:
        from .simulate import simulate_click_sequence

        clicks = simulate_click_sequence(gt, args.fixed_count, args.fixed_count, cfg, rng)
    else:
        clicks = simulate_clicks(gt, cfg, rng)
    io.write_prompts(clicks, args.out, case_id=Path(args.gt).parent.name, grid=gt)
    print(f"wrote {args.out}: {len(clicks.foreground)} fg / {len(clicks.background)} bg clicks")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    cfg = io.read_config(args.config) if args.config else EvalConfig()
    raw = config_to_dict(cfg)
    if args.budgets is not None:
        raw["budgets"] = [int(b) for b in args.budgets.split(",")]
    if args.workers is not None:
        raw["workers"] = args.workers
    if args.seed is not None:
        raw["sim"]["seed"] = args.seed
    if args.backend is not None:
        raw["backend"]["name"] = args.backend
    cfg = config_from_dict(raw)

    descriptors = io.discover_cases(args.dataset)
    if not descriptors:
        print(f"no cases found under {args.dataset}", file=sys.stderr)
        return EXIT_RUNTIME

    cases, failures = [], []
    for desc in descriptors:
        try:
            cases.append(io.load_case(desc))
        except Exception as e:  # keep going; report every broken case
            failures.append((desc.case_id, str(e)))
    if not failures and cases:
        try:
            report = evaluate_cohort(cases, cfg)
        except Exception as e:
            print(f"evaluation failed: {e}", file=sys.stderr)
            return EXIT_RUNTIME
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        io.write_report(report, out / "report.json", out / "report.csv")
        print(f"evaluated {len(cases)} cases -> {out / 'report.json'}")
        for b, row in zip(report.budgets, report.cohort_rows):
            print(f"  budget {b:2d}: dice={row.dice:.4f} "
                  f"fpvol={row.fpvol_mm3:.2f} fnvol={row.fnvol_mm3:.2f}")
        return EXIT_OK
    for case_id, message in failures:
        print(f"case {case_id}: {message}", file=sys.stderr)
    return EXIT_RUNTIME


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = io.read_config(args.config) if args.config else EvalConfig()
    app = create_app(args.dataset, cfg)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def _cmd_demo_data(args) -> int:
    from .phantom import write_phantom_dataset

    ids = write_phantom_dataset(args.out, args.cases, args.seed)
    print(f"wrote {len(ids)} phantom cases under {args.out}")
    return EXIT_OK


_COMMANDS = {
    "encode": _cmd_encode,
    "simulate": _cmd_simulate,
    "evaluate": _cmd_evaluate,
    "serve": _cmd_serve,
    "demo-data": _cmd_demo_data,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except BrokenPipeError:
        return EXIT_RUNTIME
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
