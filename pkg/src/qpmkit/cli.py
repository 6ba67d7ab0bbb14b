"""Command-line front end: ``distance``, ``test``, ``bench`` and ``verify``.

Results go to stdout as one JSON document; progress goes to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys

import numpy as np

from . import __version__
from . import bench as B
from . import kernels as K
from . import metrics as M
from . import twosample as T
from . import verify as V
from .errors import ParseError, QPMError
from .measures import as_pointset, make_measure

log = logging.getLogger("qpmkit")

TOOL = "qpmkit"
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_IO = 4

KERNEL_CHOICES = (K.GAUSSIAN, K.LAPLACIAN, K.IMQ, K.MIXTURE, "auto")


def load_points(path, weight_column: bool = False, skip_header: bool = False):
    """Read comma-separated rows into a PointSet, or a DiscreteMeasure when
    the last column holds weights. Rows and columns in errors are 1-based."""
    rows = []
    width = None
    with open(path, encoding="utf-8") as fh:
        for row_no, line in enumerate(fh, start=1):
            if skip_header and row_no == 1:
                continue
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise ParseError(f"{path}: expected {width} fields, found {len(fields)}", row_no)
            values = []
            for col_no, text in enumerate(fields, start=1):
                try:
                    values.append(float(text))
                except ValueError:
                    raise ParseError(f"{path}: cannot parse {text.strip()!r} as a number",
                                     row_no, col_no) from None
            rows.append(values)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=np.float64)
    if not weight_column:
        return as_pointset(data)
    if data.shape[1] < 2:
        raise ParseError(f"{path}: weight column needs at least one coordinate column", 1, 1)
    return make_measure(data[:, :-1], data[:, -1])


def _points_of(x) -> np.ndarray:
    return x.points.data if hasattr(x, "points") else x.data


def parse_mixture(text: str) -> K.KernelSpec:
    """``"w1:ls1,w2:ls2,..."`` into a mixture of Gaussians."""
    comps = []
    for item in text.split(","):
        try:
            w, ls = item.split(":")
            comps.append((float(w), float(ls)))
        except ValueError:
            raise ValueError(f"bad mixture component {item!r}; expected weight:length_scale") from None
    return K.mixture(comps)


def resolve_kernel(args, pooled: np.ndarray | None = None) -> tuple[K.KernelSpec, dict]:
    """Kernel from the flags, plus a note on how it was resolved."""
    fam = args.kernel
    if fam == "auto":
        if pooled is None:
            raise ValueError("kernel 'auto' needs data")
        med = K.median_heuristic(pooled, 0.5)
        lam = med**2
        note = {"rule": "gaussian, length_scale = (0.5 * median pairwise distance)^2",
                "median_times_fraction": med, "length_scale": lam}
        log.info("auto kernel: length_scale = (0.5 * median distance)^2 = %.6g^2 = %.6g", med, lam)
        return K.gaussian(lam), note
    if fam == K.GAUSSIAN:
        if args.length_scale is None and args.sigma is None:
            raise ValueError("gaussian kernel needs --length-scale or --sigma")
        if args.length_scale is not None and args.sigma is not None:
            raise ValueError("give only one of --length-scale and --sigma")
        if args.sigma is not None:
            return K.gaussian_sigma(args.sigma), {"rule": "length_scale = 2 * sigma^2"}
        return K.gaussian(args.length_scale), {"rule": "explicit"}
    if fam == K.LAPLACIAN:
        if args.length_scale is None:
            raise ValueError("laplacian kernel needs --length-scale")
        return K.laplacian(args.length_scale), {"rule": "explicit"}
    if fam == K.IMQ:
        if args.length_scale is None:
            raise ValueError("imq kernel needs --length-scale")
        return K.imq(args.length_scale, args.alpha), {"rule": "explicit"}
    if args.mixture:
        return parse_mixture(args.mixture), {"rule": "explicit"}
    return K.gmmn_mixture(), {"rule": "default sigma^2 in (2, 5, 10, 20, 40, 80)"}


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "func"}


def _envelope(args, **body) -> dict:
    return {"tool": TOOL, "version": __version__, "command": args.command,
            "seed": args.seed, "config": _config(args), **body}


def _pair(args):
    a = load_points(args.a, args.weights_last_column, args.skip_header)
    b = load_points(args.b, args.weights_last_column, args.skip_header)
    return a, b


def cmd_distance(args) -> tuple[dict, int]:
    a, b = _pair(args)
    pooled = np.vstack([_points_of(a), _points_of(b)])
    spec, note = resolve_kernel(args, pooled)
    body = {"statistic": args.statistic, "kernel": spec.describe(), "kernel_resolution": note}
    if args.statistic == "mmd":
        r = M.mmd(a, b, spec)
        body.update(value=r.value, kind=r.kind, epsilon_used=0.0, clamped=r.clamped)
    else:
        r = M.qpm(a, b, spec, args.sqrt_kernel == "on", args.isometric == "on",
                  epsilon=args.epsilon)
        body.update(value=r.value, kind=r.kind, epsilon_used=r.epsilon_used,
                    eigenvalues=r.spectrum.eigenvalues.tolist(), path=r.spectrum.path,
                    gram_kernel=r.kernel_used)
    body["support_size"] = r.support_size
    log.info("%s = %.12g", r.kind, r.value)
    return _envelope(args, **body), EXIT_OK


def cmd_test(args) -> tuple[dict, int]:
    if args.weights_last_column:
        raise ValueError("the permutation test takes unweighted samples")
    a, b = _pair(args)
    spec, note = resolve_kernel(args, np.vstack([a.data, b.data]))
    kw = {}
    if args.statistic == "qpm":
        kw = {"use_sqrt_kernel": args.sqrt_kernel == "on", "epsilon": args.epsilon}
    res = T.permutation_test(a, b, spec, args.statistic, args.permutations, args.seed,
                             n_jobs=args.jobs, **kw)
    log.info("baseline %.6g, r = %d of %d, p = %.6g", res.baseline, res.exceed_count,
             res.n_perm, res.p_value)
    body = res.to_dict()
    body.update(kernel=spec.describe(), kernel_resolution=note, r=res.exceed_count)
    return _envelope(args, **body), EXIT_OK


def cmd_bench(args) -> tuple[dict, int]:
    sweep = B.run_bench(args.sizes, args.repeats, args.dim, args.seed, log=log.info)
    if args.csv:
        B.write_csv(args.csv, sweep.records)
        log.info("wrote %s", args.csv)
    return _envelope(args, **sweep.to_dict()), EXIT_OK


def cmd_verify(args) -> tuple[dict, int]:
    checks = V.run_suite(args.suite, quick=args.quick)
    for c in checks:
        log.info("%s", c.line())
    ok = all(c.passed for c in checks)
    body = {"suite": args.suite, "passed": ok, "checks": [c.to_dict() for c in checks]}
    return _envelope(args, **body), EXIT_OK if ok else EXIT_CHECK_FAILED


def _sizes(text: str) -> list[int]:
    try:
        return B.check_sizes(int(s) for s in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive(text: str) -> float:
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL, description="QPM and MMD between discrete measures")
    parser.add_argument("--version", action="version", version=f"{TOOL} {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    common.add_argument("-q", "--quiet", action="store_true", help="warnings only on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p):
        p.add_argument("--a", required=True, help="CSV file, one sample per row")
        p.add_argument("--b", required=True, help="CSV file, one sample per row")
        p.add_argument("--statistic", choices=("mmd", "qpm"), default="qpm")
        p.add_argument("--kernel", choices=KERNEL_CHOICES, default=K.GAUSSIAN)
        p.add_argument("--length-scale", type=_positive, default=None,
                       help="gaussian lambda in exp(-r^2/lambda); laplacian and imq scale")
        p.add_argument("--sigma", type=_positive, default=None,
                       help="gaussian bandwidth sigma, lambda = 2 sigma^2")
        p.add_argument("--alpha", type=_positive, default=1.0, help="imq exponent")
        p.add_argument("--mixture", default=None,
                       help="mixture components as weight:lambda,... (default: six-bandwidth mix)")
        p.add_argument("--sqrt-kernel", choices=("on", "off"), default="on")
        p.add_argument("--isometric", choices=("on", "off"), default="off")
        p.add_argument("--epsilon", type=float, default=0.0, help="first regularization rung")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--weights-last-column", action="store_true")
        p.add_argument("--skip-header", action="store_true")

    p = sub.add_parser("distance", parents=[common], help="distance between two measures")
    data_args(p)
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("test", parents=[common], help="permutation two-sample test")
    data_args(p)
    p.add_argument("--permutations", type=int, default=1000)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("bench", parents=[common], help="time MMD and QPM against the support size")
    p.add_argument("--sizes", type=_sizes, default=[256, 512, 1024, 2048],
                   help="comma-separated ascending sizes, each <= 8192")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--dim", type=int, default=B.BENCH_DIM)
    p.add_argument("--seed", type=int, default=B.BENCH_SEED)
    p.add_argument("--csv", default=None, help="also write the records as CSV")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", parents=[common], help="run acceptance checks")
    p.add_argument("--suite", choices=V.SUITES, default="all")
    p.add_argument("--quick", action="store_true", help="fewer random instances")
    p.add_argument("--seed", type=int, default=0, help="recorded only; suites use fixed seeds")
    p.set_defaults(func=cmd_verify)
    return parser


def _error(args, exc: Exception) -> dict:
    err = {"type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ParseError):
        err.update(row=exc.row, column=exc.column)
    return {"tool": TOOL, "version": __version__, "command": getattr(args, "command", None),
            "error": err}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, stream=sys.stderr, format="%(name)s: %(message)s")
    try:
        doc, code = args.func(args)
    except (QPMError, ValueError) as exc:
        doc, code = _error(args, exc), EXIT_INPUT
    except OSError as exc:
        doc, code = _error(args, exc), EXIT_IO
    if code not in (EXIT_OK, EXIT_CHECK_FAILED):
        log.error("%s", doc["error"]["message"])
    json.dump(doc, sys.stdout, indent=2, allow_nan=False)
    sys.stdout.write("\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
