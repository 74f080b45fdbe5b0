"""Command-line interface: ``stereo-risk {match,minimize,eval,bench,demo-fit,synth}``.

Exit codes: 0 success, 1 I/O or parse failure, 2 invalid arguments or inputs.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .costvol import (CENSUS_WINDOW, PREDICTORS, REFINE_PAD, TEMPERATURE, DisparityMap, match,
                      resolve_threads, synthetic_pair)
from .distribution import DisparityPmf, Kernel
from .errors import FormatError, InputError
from .grad import fit_pmf_demo
from .io import read_image, read_mask, read_pfm, write_pfm, write_pgm
from .metrics import EvalMask, evaluate
from .risk import (DEFAULT_MAX_ITERS, DEFAULT_SIGMA, DEFAULT_TAU, NORMS, RiskConfig, risk,
                   solve_generic)

log = logging.getLogger("stereorisk")

EXIT_OK, EXIT_IO, EXIT_INVALID = 0, 1, 2


class ParseError(Exception):
    """Input file content could not be interpreted (exit code 1)."""


def _add_risk_flags(p, sigma=True):
    if sigma:
        p.add_argument("--sigma", type=float, default=DEFAULT_SIGMA, help="kernel bandwidth in pixels")
        p.add_argument("--kernel", choices=["laplacian", "gaussian"], default="laplacian")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU, help="stopping tolerance on |G|")
    p.add_argument("--beta", type=float, default=1.0, help="Huber threshold in pixels")
    p.add_argument("--max-iters", type=int, default=DEFAULT_MAX_ITERS)


def _add_pipeline_flags(p):
    p.add_argument("--max-disp", type=int, default=192)
    p.add_argument("--predictor", choices=sorted(PREDICTORS), default="l1risk")
    _add_risk_flags(p)
    p.add_argument("--temperature", type=float, default=TEMPERATURE)
    p.add_argument("--census-window", type=int, default=CENSUS_WINDOW)
    p.add_argument("--refine-pad", type=float, default=REFINE_PAD,
                   help="px added on both sides of the refined hypothesis span")
    p.add_argument("--no-cascade", action="store_true", help="skip the refined 1/2-resolution stage")
    p.add_argument("--box-filter", action=argparse.BooleanOptionalAction, default=True,
                   help="5x5 box aggregation of the cost volume")
    p.add_argument("--threads", default=None, help="worker threads or 'auto' (env STEREO_RISK_THREADS)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stereo-risk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)
    _add = sub.add_parser

    def add_parser(name, **kw):
        return _add(name, parents=[common], **kw)

    sub.add_parser = add_parser

    p = sub.add_parser("match", help="estimate a disparity map from a rectified pair")
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--out", required=True, help="output PFM path")
    p.add_argument("--gt", help="ground-truth PFM; enables a metrics JSON next to --out")
    p.add_argument("--noc", help="non-occluded mask image (nonzero = evaluate)")
    p.add_argument("--metrics-out", help="metrics JSON path (default: <out>.json)")
    _add_pipeline_flags(p)

    p = sub.add_parser("minimize", help="minimize the risk of one PMF given as JSON")
    p.add_argument("pmf", help='JSON file: {"d": [...], "p": [...], "sigma": 1.1, "kernel": "laplacian"}')
    p.add_argument("--norm", choices=NORMS, default="l1")
    _add_risk_flags(p, sigma=False)
    p.add_argument("--sweep", help="write a CSV sweep of the risk (y, risk) to this path, '-' for stdout")
    p.add_argument("--sweep-points", type=int, default=201)

    p = sub.add_parser("eval", help="score a predicted PFM against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--noc")
    p.add_argument("--out", help="write JSON here instead of stdout")

    p = sub.add_parser("bench", help="time the pipeline and report bisection iteration counts")
    p.add_argument("--left")
    p.add_argument("--right")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--shift", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--taus", default="0.3,0.1,0.01")
    p.add_argument("--out", help="write the JSON report here as well")
    _add_pipeline_flags(p)

    p = sub.add_parser("demo-fit", help="fit logits through the implicit gradient; CSV trace")
    p.add_argument("--target", type=float, default=4.3)
    p.add_argument("--hypotheses", default="0,1,2,3,4,5,6,7,8,9")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--out", help="CSV path (default stdout)")

    p = sub.add_parser("synth", help="write a seeded synthetic pair (PGM) and its ground truth (PFM)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--shift", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _risk_config(args, kernel=None) -> RiskConfig:
    kernel = kernel or Kernel(args.kernel, args.sigma)
    return RiskConfig(kernel=kernel, tau=args.tau, beta=args.beta, max_iters=args.max_iters)


def _pipeline_kwargs(args) -> dict:
    if args.max_disp <= 0:
        raise InputError("--max-disp must be a positive integer")
    return dict(max_disp=args.max_disp, cfg=_risk_config(args), predictor=args.predictor,
                temperature=args.temperature, census_window=args.census_window,
                cascade=not args.no_cascade, box_filter=args.box_filter, refine_pad=args.refine_pad,
                threads=resolve_threads(args.threads))


def _dump_json(obj, path=None):
    text = json.dumps(obj, indent=2) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _eval_mask(gt: DisparityMap, noc_path) -> EvalMask:
    noc = None
    if noc_path:
        noc = read_mask(noc_path)
        if noc.shape != gt.shape:
            raise InputError(f"Noc mask {noc.shape} and ground truth {gt.shape} differ in size")
    return EvalMask.full(gt.shape, noc)


def cmd_match(args) -> int:
    left, right = read_image(args.left), read_image(args.right)
    if left.pixels.shape != right.pixels.shape:
        raise InputError(f"left {left.pixels.shape} and right {right.pixels.shape} differ in size")
    result = match(left, right, **_pipeline_kwargs(args))
    write_pfm(result.disparity, args.out)
    log.info("wrote %s (%s)", args.out, ", ".join(f"{k} {v:.3f}s" for k, v in result.timings.items()))
    if args.gt:
        gt = read_pfm(args.gt)
        report = evaluate(result.disparity, gt, _eval_mask(gt, args.noc))
        _dump_json(report.to_dict(), args.metrics_out or str(Path(args.out).with_suffix(".json")))
    return EXIT_OK


def load_pmf_json(path) -> tuple[DisparityPmf, Kernel]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON ({exc})") from None
    if not isinstance(doc, dict) or "d" not in doc or "p" not in doc:
        raise ParseError(f'{path}: expected an object with "d" and "p" arrays')
    try:
        pmf = DisparityPmf(doc["d"], doc["p"])
        kernel = Kernel(doc.get("kernel", "laplacian"), float(doc.get("sigma", DEFAULT_SIGMA)))
    except (InputError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from None
    return pmf, kernel


def cmd_minimize(args) -> int:
    pmf, kernel = load_pmf_json(args.pmf)
    cfg = _risk_config(args, kernel).with_(norm=args.norm)
    res = solve_generic(pmf, cfg)
    print(f"y_star {res.y_star!r}")
    print(f"iterations {res.iterations}")
    print(f"final_abs_g {res.final_derivative!r}")
    if args.sweep:
        pad = 5.0 * kernel.sigma
        ys = np.linspace(pmf.lo - pad, pmf.hi + pad, args.sweep_points)
        handle = sys.stdout if args.sweep == "-" else open(args.sweep, "w", newline="")
        try:
            writer = csv.writer(handle)
            writer.writerow(["y", "risk"])
            for y in ys:
                writer.writerow([f"{y:.6f}", f"{risk(pmf, cfg, y):.10g}"])
        finally:
            if handle is not sys.stdout:
                handle.close()
    return EXIT_OK


def cmd_eval(args) -> int:
    pred, gt = read_pfm(args.pred), read_pfm(args.gt)
    if pred.shape != gt.shape:
        raise InputError(f"prediction {pred.shape} and ground truth {gt.shape} differ in size")
    _dump_json(evaluate(pred, gt, _eval_mask(gt, args.noc)).to_dict(), args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.left and args.right:
        left, right = read_image(args.left).pixels, read_image(args.right).pixels
        gt = None
    else:
        left, right, gt = synthetic_pair(args.size, args.size, args.shift, args.seed)
    kwargs = _pipeline_kwargs(args)
    taus = [float(t) for t in args.taus.split(",")]
    report = {"backend": BACKEND, "shape": list(left.shape), "threads": kwargs["threads"], "runs": []}
    for tau in taus:
        kwargs["cfg"] = kwargs["cfg"].with_(tau=tau)
        t0 = time.perf_counter()
        res = match(left, right, **kwargs)
        wall = time.perf_counter() - t0
        coarse_it = res.iterations["coarse"]
        solve_s = sum(v for k, v in res.timings.items() if k.endswith("_solve"))
        n_solved = sum(v.size for v in res.iterations.values())
        run = {
            "tau": tau,
            "wall_seconds": wall,
            "stage_seconds": res.timings,
            "solver_pixels_per_second": n_solved / solve_s if solve_s > 0 else None,
            "coarse_mean_iterations": float(coarse_it.mean()),
            "coarse_max_iterations": int(coarse_it.max()),
        }
        if "refined" in res.iterations:
            run["refined_mean_iterations"] = float(res.iterations["refined"].mean())
        if gt is not None:
            run["epe"] = float(np.abs(res.disparity.values - gt)[res.disparity.valid].mean())
        report["runs"].append(run)
    _dump_json(report)
    if args.out:
        _dump_json(report, args.out)
    return EXIT_OK


def cmd_demo_fit(args) -> int:
    try:
        hyps = [float(v) for v in args.hypotheses.split(",")]
    except ValueError:
        raise InputError("--hypotheses must be a comma-separated list of numbers") from None
    trace = fit_pmf_demo(args.target, hyps, args.steps, args.lr)
    handle = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(handle)
        writer.writerow(["step", "loss", "y"])
        for step, (loss, y) in enumerate(trace):
            writer.writerow([step, f"{loss:.10g}", f"{y:.10g}"])
    finally:
        if handle is not sys.stdout:
            handle.close()
    return EXIT_OK


def cmd_synth(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    left, right, gt = synthetic_pair(args.size, args.size, args.shift, args.seed)
    write_pgm(left, out / "left.pgm", maxval=65535)
    write_pgm(right, out / "right.pgm", maxval=65535)
    write_pfm(DisparityMap(gt), out / "gt.pfm")
    print(out)
    return EXIT_OK


COMMANDS = {"match": cmd_match, "minimize": cmd_minimize, "eval": cmd_eval,
            "bench": cmd_bench, "demo-fit": cmd_demo_fit, "synth": cmd_synth}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ParseError, FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
