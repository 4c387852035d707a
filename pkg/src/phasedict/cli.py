"""Command-line interface.

Subcommands: measure (synthesize and persist a measurement set), solve
(reconstruct from fresh or persisted measurements), report (recompute
summary tables from per-run CSVs) and atlas (render a dictionary file).

Options may also come from an INI-style config file (flat key = value
entries grouped into sections; section names are ignored, keys match the
long flag names with dashes replaced by underscores).  Precedence is
command line over config file over built-in defaults.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 success but at
least one run terminated early because every sub-update stalled.
"""

import argparse
import configparser
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from . import images as img_io
from . import metrics as mt
from . import operators as ops
from . import solver as sv

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_STALLED = 3


def _parse_pair(text: str) -> tuple:
    """Parse 'AxB' into a pair of positive ints."""
    parts = text.lower().split("x")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(
            f"expected ROWSxCOLS (e.g. 8x8), got {text!r}")
    try:
        pair = (int(parts[0]), int(parts[1]))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected ROWSxCOLS (e.g. 8x8), got {text!r}") from None
    return pair


def _read_config_file(path) -> dict:
    parser = configparser.ConfigParser()
    with open(path, "r", encoding="utf-8") as fh:
        parser.read_file(fh)
    flat = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            flat[key.replace("-", "_")] = value
    return flat


_CONVERTERS = {
    "image": str, "measurements": str, "operator": str, "alphabet": str,
    "variant": str, "step": str, "out": str, "dictionary": str, "runs": str,
    "masks": int, "seed": int, "replicates": int,
    "k1_sparsity": int, "k2_sparsity": int, "iters_k1": int, "iters_k2": int,
    "oversample": float, "snr_db": float, "mu": float, "lam": float,
    "mu_phase2": float, "omp_eps": float,
    "patch": _parse_pair, "stride": _parse_pair,
    "wf_baseline": lambda v: v.strip().lower() in ("1", "true", "yes", "on"),
    "save_sets": lambda v: v.strip().lower() in ("1", "true", "yes", "on"),
    "bit_depth": int,
}


def _merge(args: argparse.Namespace, defaults: dict) -> dict:
    """Apply precedence: explicit CLI flags, then config file, defaults."""
    file_values = {}
    if getattr(args, "config", None):
        file_values = _read_config_file(args.config)
    merged = {}
    for key, default in defaults.items():
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            merged[key] = cli_value
        elif key in file_values and file_values[key] != "":
            merged[key] = _CONVERTERS.get(key, str)(file_values[key])
        else:
            merged[key] = default
    return merged


def _add_measurement_flags(p: argparse.ArgumentParser):
    p.add_argument("--operator", choices=ex.OPERATOR_KINDS,
                   help="measurement operator family (default cdp)")
    p.add_argument("--masks", type=int, help="mask count for cdp (default 2)")
    p.add_argument("--alphabet", choices=("ternary", "octanary"),
                   help="cdp mask alphabet (default ternary)")
    p.add_argument("--oversample", type=float,
                   help="Gaussian row oversampling M/N (default 4)")
    p.add_argument("--snr-db", type=float, dest="snr_db",
                   help="measurement SNR in dB (default 20)")


def _add_solver_flags(p: argparse.ArgumentParser):
    p.add_argument("--variant", choices=sv.VARIANTS,
                   help="reconstruction variant (default l1)")
    p.add_argument("--mu", type=float,
                   help="patch-fit weight as a multiple of the measurement "
                        "count (variant default)")
    p.add_argument("--lambda", type=float, dest="lam",
                   help="l1 penalty weight as a multiple of the measurement "
                        "count (variant default)")
    p.add_argument("--mu-phase2", type=float, dest="mu_phase2",
                   help="phase-2 mu for the l0 variant (default 1.68*mu)")
    p.add_argument("--k1-sparsity", type=int, dest="k1_sparsity",
                   help="phase-1 OMP sparsity cap (default 4)")
    p.add_argument("--k2-sparsity", type=int, dest="k2_sparsity",
                   help="phase-2 OMP sparsity cap (default 8)")
    p.add_argument("--omp-eps", type=float, dest="omp_eps",
                   help="OMP residual stopping threshold (default 0.1)")
    p.add_argument("--iters-k1", type=int, dest="iters_k1",
                   help="phase-1 iteration count (variant default)")
    p.add_argument("--iters-k2", type=int, dest="iters_k2",
                   help="phase-2 iteration count (variant default)")
    p.add_argument("--patch", type=_parse_pair,
                   help="patch size ROWSxCOLS (default 8x8)")
    p.add_argument("--stride", type=_parse_pair,
                   help="patch stride ROWSxCOLS (default: patch size)")
    p.add_argument("--step", choices=("heuristic", "armijo"),
                   help="step-size policy (default heuristic)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phasedict",
        description="Phase retrieval with learned patch dictionaries")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("measure", help="synthesize a measurement set")
    p.add_argument("--image", help="grayscale input image (PGM or PNG)")
    _add_measurement_flags(p)
    p.add_argument("--seed", type=int, help="base seed (default 0)")
    p.add_argument("--out", help="output file (default measurements.bin)")
    p.add_argument("--config", help="INI config file")

    p = sub.add_parser("solve", help="reconstruct an image")
    p.add_argument("--image", action="append",
                   help="input image; repeat for a multi-image sweep")
    p.add_argument("--measurements",
                   help="persisted measurement set (skips measuring; "
                        "--image then only provides the metric reference)")
    _add_measurement_flags(p)
    _add_solver_flags(p)
    p.add_argument("--seed", type=int, help="base seed (default 0)")
    p.add_argument("--replicates", type=int,
                   help="independent repetitions (default 1)")
    p.add_argument("--no-wf-baseline", dest="wf_baseline",
                   action="store_false", default=None,
                   help="skip the Wirtinger Flow baseline co-run")
    p.add_argument("--no-save-sets", dest="save_sets", action="store_false",
                   default=None, help="do not persist measurement sets")
    p.add_argument("--out", help="output directory (default runs)")
    p.add_argument("--config", help="INI config file")

    p = sub.add_parser("report", help="recompute summary tables")
    p.add_argument("--runs", required=True, help="per-run CSV (runs.csv)")
    p.add_argument("--out", help="write the summary CSV here as well")

    p = sub.add_parser("atlas", help="render a dictionary to an image")
    p.add_argument("--dictionary", required=True, help="dictionary file")
    p.add_argument("--patch", type=_parse_pair, required=True,
                   help="patch size ROWSxCOLS")
    p.add_argument("--out", help="output image (default atlas.png)")

    return parser


def _cmd_measure(args) -> int:
    opts = _merge(args, dict(
        image=None, operator="cdp", masks=2, alphabet="ternary",
        oversample=4.0, snr_db=20.0, seed=0, out="measurements.bin"))
    if not opts["image"]:
        print("measure: --image is required", file=sys.stderr)
        return EXIT_USAGE
    image = img_io.load_image(opts["image"])
    spec = ex.ExperimentSpec(
        image_paths=(opts["image"],), operator=opts["operator"],
        masks=opts["masks"], alphabet=opts["alphabet"],
        oversample=opts["oversample"], snr_db=opts["snr_db"],
        seed=opts["seed"])
    op_rng = np.random.default_rng(ex.OPERATOR_SEED_OFFSET + opts["seed"])
    operator = ex.build_operator(spec, image.shape, op_rng)
    mset = ops.measure(operator, image, opts["snr_db"], opts["seed"])
    ops.save_measurements(mset, opts["out"])
    print(f"wrote {opts['out']}: {opts['operator']} measurements "
          f"{mset.measurements.shape} of image {image.shape}")
    return EXIT_OK


def _cmd_solve(args) -> int:
    opts = _merge(args, dict(
        image=None, measurements=None, operator="cdp", masks=2,
        alphabet="ternary", oversample=4.0, snr_db=20.0, variant="l1",
        mu=None, lam=None, mu_phase2=None, k1_sparsity=4, k2_sparsity=8,
        omp_eps=0.1, iters_k1=None, iters_k2=None, patch=(8, 8), stride=None,
        step="heuristic", seed=0, replicates=1, wf_baseline=True,
        save_sets=True, out="runs"))
    if opts["measurements"]:
        return _solve_from_file(opts)
    if not opts["image"]:
        print("solve: --image or --measurements is required", file=sys.stderr)
        return EXIT_USAGE
    images = opts["image"] if isinstance(opts["image"], list) else [opts["image"]]
    spec = ex.ExperimentSpec(
        image_paths=tuple(images), operator=opts["operator"],
        masks=opts["masks"], alphabet=opts["alphabet"],
        oversample=opts["oversample"], snr_db=opts["snr_db"],
        variant=opts["variant"], mu=opts["mu"], lam=opts["lam"],
        mu_phase2=opts["mu_phase2"], k1_sparsity=opts["k1_sparsity"],
        k2_sparsity=opts["k2_sparsity"], omp_eps=opts["omp_eps"],
        iters_k1=opts["iters_k1"], iters_k2=opts["iters_k2"],
        patch=opts["patch"], stride=opts["stride"], step=opts["step"],
        seed=opts["seed"], replicates=opts["replicates"],
        wf_baseline=opts["wf_baseline"], save_sets=opts["save_sets"],
        out_dir=opts["out"])
    result = ex.run_experiment(spec)
    for row in ex.summarize(result.records):
        print(f"{row['estimator']}: n={row['count']} "
              f"psnr={row['psnr_mean_db']:.2f} dB ssim={row['ssim_mean']:.4f}")
    print(f"artifacts in {opts['out']}")
    return EXIT_STALLED if result.any_early_stop else EXIT_OK


def _solve_from_file(opts) -> int:
    mset = ops.load_measurements(opts["measurements"])
    out_dir = Path(opts["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    n1, n2 = mset.image_shape
    s1, s2 = opts["patch"]
    t1, t2 = opts["stride"] if opts["stride"] else opts["patch"]
    geometry = ex.PatchGeometry(s1, s2, t1, t2, n1, n2)
    overrides = dict(seed=opts["seed"], step=opts["step"],
                     k1_sparsity=opts["k1_sparsity"],
                     k2_sparsity=opts["k2_sparsity"], omp_eps=opts["omp_eps"])
    for name in ("mu", "lam", "mu_phase2", "iters_k1", "iters_k2"):
        if opts[name] is not None:
            overrides[name] = opts[name]
    config = sv.default_config(opts["variant"], geometry, **overrides)
    state, recon = sv.run_joint(mset, config)
    ex.write_trace_csv(state.trace, out_dir / "trace.csv")
    img_io.save_image(recon.image, out_dir / "recon_x.png", bit_depth=16)
    if recon.patch_image is not None:
        img_io.save_image(recon.patch_image, out_dir / "recon_patch.png",
                          bit_depth=16)
    if state.dictionary is not None:
        img_io.save_dictionary(state.dictionary, out_dir / "dictionary.bin")
        img_io.save_dictionary_atlas(state.dictionary, s1, s2,
                                     out_dir / "atlas.png")
        img_io.export_codes_csv(state.codes, out_dir / "codes.csv")
    if opts["image"]:
        ref_path = opts["image"][0] if isinstance(opts["image"], list) \
            else opts["image"]
        reference = img_io.load_image(ref_path)
        print(f"x: psnr={mt.psnr(reference, recon.image):.2f} dB "
              f"ssim={mt.ssim(reference, recon.image):.4f}")
        if recon.patch_image is not None:
            print(f"patch: psnr={mt.psnr(reference, recon.patch_image):.2f} "
                  f"dB ssim={mt.ssim(reference, recon.patch_image):.4f}")
    print(f"artifacts in {out_dir}")
    return EXIT_STALLED if state.early_stop else EXIT_OK


def _cmd_report(args) -> int:
    rows = ex.read_runs_csv(args.runs)
    summary = ex.summarize(rows)
    for row in summary:
        print(f"{row['estimator']}: n={row['count']} "
              f"psnr={row['psnr_mean_db']} ssim={row['ssim_mean']} "
              f"sparsity={row['sparsity_mean']}")
    if args.out:
        ex.write_summary_csv(summary, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_atlas(args) -> int:
    dictionary = img_io.load_dictionary(args.dictionary)
    out = args.out or "atlas.png"
    img_io.save_dictionary_atlas(dictionary, args.patch[0], args.patch[1], out)
    print(f"wrote {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"measure": _cmd_measure, "solve": _cmd_solve,
                "report": _cmd_report, "atlas": _cmd_atlas}
    try:
        return handlers[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
