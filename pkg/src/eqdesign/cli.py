"""Command-line entry point.

Subcommands: ``moments``, ``solve``, ``cubature``, ``christoffel`` and
``verify {pell,boundary,kkt,pstar,weakstar}``.  Structured results are
written as JSON, point clouds as CSV.  Exit status is 0 on success, 2 for
invalid input and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .basis import Polynomial, dim_poly
from .christoffel import KernelEvaluator, build_kernel, equilibrium_variance, set_frame
from .cubature import cubature_for_equilibrium
from .equilibrium import (SemiAlgebraicSet, _exact_moments_cached, equilibrium_moments,
                          make_set)
from .errors import NumericalError
from .solver import CandidateGrid, DesignMeasure, solve_design
from .verify import (check_boundary_maxima, check_kkt_general, check_pell, check_pstar,
                     check_weakstar, _jsonable)

log = logging.getLogger("eqdesign")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3
CHECKS = ("pell", "boundary", "kkt", "pstar", "weakstar")


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# custom sets

def _negative_definite_quadratic(g: Polynomial) -> bool:
    if g.degree != 2:
        return False
    d = g.dim
    H = np.zeros((d, d))
    for exp, c in g.terms.items():
        if sum(exp) != 2:
            continue
        idx = [i for i, e in enumerate(exp) for _ in range(e)]
        i, j = idx
        if i == j:
            H[i, i] += c
        else:
            H[i, j] += c / 2
            H[j, i] += c / 2
    return bool(np.all(np.linalg.eigvalsh(H) < 0))


def load_custom_set(path, add_ball: float | None = None, rng=None) -> SemiAlgebraicSet:
    """Read ``{"dim": d, "generators": [[{"exp": [...], "coef": c}, ...], ...],
    "bbox": [[lo, hi], ...]}`` and validate it.

    A warning is logged when no generator is a quadratic with negative
    definite leading part (so ``M - |x|^2`` is not among them); ``add_ball``
    appends that constraint with the given ``M``.
    """
    try:
        with open(path) as fh:
            raw_obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: malformed JSON ({exc})") from exc
    try:
        dim = int(raw_obj["dim"])
        raw = raw_obj["generators"]
        gens = [Polynomial.from_json(terms, dim) for terms in raw]
        bbox = raw_obj.get("bbox")
        if bbox is None:
            raise ValueError(f"{path}: a bounding box 'bbox' is required for sampling")
        bbox = [(float(a), float(b)) for a, b in bbox]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: malformed set description ({exc!r})") from exc
    if not gens:
        raise ValueError(f"{path}: the set needs at least one generator")
    if len(bbox) != dim or any(not b > a for a, b in bbox):
        raise ValueError(f"{path}: bbox must list {dim} intervals with lo < hi")
    if add_ball is not None:
        if add_ball <= 0:
            raise ValueError("--add-ball needs a positive radius bound M")
        g = Polynomial.constant(dim, add_ball)
        for i in range(dim):
            g = g - Polynomial.variable(dim, i) ** 2
        gens.append(g)
    elif not any(_negative_definite_quadratic(g) for g in gens):
        log.warning("no generator has the form M - |x|^2; pass --add-ball M to append one")
    name = str(raw_obj.get("name", Path(path).stem))
    S = SemiAlgebraicSet(dim, "custom", tuple(gens), name=name, bbox=tuple(bbox))
    rng = np.random.default_rng(0) if rng is None else rng
    lo, hi = np.array(bbox).T
    probe = rng.uniform(lo, hi, size=(20000, dim))
    if not S.contains(probe, 0.0).any():
        raise ValueError(f"{path}: no sampled point of the bounding box lies in the set")
    return S


def resolve_set(args) -> SemiAlgebraicSet:
    kind = args.set
    if kind.startswith("custom:"):
        S = load_custom_set(kind[len("custom:"):], args.add_ball)
        if args.dim is not None and args.dim != S.dim:
            raise ValueError(f"--dim {args.dim} differs from the set file's dim {S.dim}")
        return S
    if args.add_ball is not None:
        raise ValueError("--add-ball applies only to custom sets")
    dim = args.dim
    if dim is None:
        if kind != "interval":
            raise ValueError(f"--dim is required for --set {kind}")
        dim = 1
    return make_set(kind, dim)


def _set_json(S: SemiAlgebraicSet) -> dict:
    out = {"kind": S.kind, "dim": S.dim, "name": S.name}
    if not S.builtin:
        out["generators"] = [g.to_json() for g in S.generators]
        out["bbox"] = [list(b) for b in S.bbox]
    return out


# I/O

def write_atomic(path, text: str):
    """Write via a temporary file in the target directory and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        write_atomic(out, text)


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2) + "\n"


def read_points(path, dim: int) -> np.ndarray:
    """Points from a CSV file, one per row; a non-numeric header row is skipped."""
    rows = []
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            row = [c.strip() for c in row if c.strip()]
            if not row:
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                if k == 0:
                    continue
                raise ValueError(f"{path}: row {k + 1} is not numeric")
            rows.append(vals[:dim])
    if not rows:
        raise ValueError(f"{path}: no points")
    pts = np.array(rows, dtype=float)
    if pts.shape[1] != dim:
        raise ValueError(f"{path}: expected {dim} coordinates per row")
    return pts


def load_design(path) -> DesignMeasure:
    with open(path) as fh:
        obj = json.load(fh)
    try:
        return DesignMeasure.from_json(obj)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: not a design file ({exc!r})") from exc


def _parse_floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(" ", "").split(",") if t]


def _parse_ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(" ", "").split(",") if t]


# subcommands

def cmd_moments(args, rng):
    S = resolve_set(args)
    degree = args.degree
    if degree is None and args.n is not None:
        degree = 2 * args.n
    if degree is None:
        raise ValueError("give --degree (or --n for degree 2n)")
    if degree < 0:
        raise ValueError("--degree must be nonnegative")
    mv = equilibrium_moments(S, degree)
    if args.format == "csv":
        _emit(mv.to_csv(), args.out)
        return
    obj = mv.to_json()
    exact = _exact_moments_cached(S.geometry, S.dim, degree)
    for entry, q in zip(obj["moments"], exact):
        entry["rational"] = str(q)
    obj["set"] = _set_json(S)
    obj["measure"] = "equilibrium"
    _emit(_dump(obj), args.out)


def cmd_solve(args, rng):
    S = resolve_set(args)
    grid = None
    if args.grid != "auto":
        grid = CandidateGrid(read_points(args.grid, S.dim), "user")
    design, report = solve_design(S, args.n, args.objective, grid=grid, tol=args.tol,
                                  max_iter=args.max_iter, rng=rng)
    obj = {"atoms": design.atoms.tolist(), "weights": design.weights.tolist(),
           "objective": report.objective, "gap": report.gap,
           "iterations": report.iterations, "converged": report.converged,
           "objective_kind": report.objective_kind, "n": args.n, "set": _set_json(S),
           "seed": args.seed, "report": report.to_json()}
    _emit(_dump(obj), args.out)
    log.info("%d atoms, gap %.3e (trace %d), converged=%s", len(design), report.gap,
             report.trace, report.converged)


def cmd_cubature(args, rng):
    S = resolve_set(args)
    rule = cubature_for_equilibrium(S, args.n)
    residual = rule.moment_residual()
    bound = dim_poly(S.dim, 2 * args.n)
    sidecar = {"set": _set_json(S), "n": args.n, "exact_degree": rule.exact_degree,
               "atoms": len(rule), "atom_bound": bound, "moment_residual": residual,
               "min_weight": float(rule.weights.min()),
               "min_generator": float(S.generator_values(rule.atoms).min())
               if S.generators else 0.0,
               "info": getattr(rule, "info", {})}
    _emit(rule.to_csv(), args.out)
    if args.out not in (None, "-"):
        write_atomic(Path(args.out).with_suffix(".json"), _dump(sidecar))
    else:
        sys.stderr.write(_dump(sidecar))


def _points_for_christoffel(args, S):
    if args.points:
        return read_points(args.points, S.dim)
    if args.at:
        pts = np.array([_parse_floats(a) for a in args.at], dtype=float)
        if pts.shape[1] != S.dim:
            raise ValueError(f"--at points need {S.dim} coordinates")
        return pts
    axes = [np.linspace(a, b, args.resolution) for a, b in S.bbox]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def cmd_christoffel(args, rng):
    S = resolve_set(args)
    pts = _points_for_christoffel(args, S)
    if args.design:
        design = load_design(args.design)
        if design.dim != S.dim:
            raise ValueError("design dimension differs from the set dimension")
        ev = build_kernel(design.moments(2 * args.n), args.n, frame=set_frame(S))
    else:
        if not S.builtin:
            raise ValueError("custom sets need --design (no closed-form equilibrium measure)")
        ev: KernelEvaluator = equilibrium_variance(S, args.n, [(Polynomial.constant(S.dim), 0)]
                                                   ).blocks[0][1]
    K = ev.kernel(pts)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i + 1}" for i in range(S.dim)] + ["K", "Lambda"])
    for x, k in zip(pts, K):
        w.writerow([repr(float(v)) for v in x] + [repr(float(k)), repr(float(1.0 / k))])
    _emit(buf.getvalue(), args.out)


def cmd_verify(args, rng):
    S = resolve_set(args)
    check = args.check
    if check == "pell":
        rep = check_pell(S, args.n, samples=args.samples, rng=rng)
    elif check == "boundary":
        rep = check_boundary_maxima(S, args.n, samples=args.samples, rng=rng)
    elif check == "pstar":
        rep = check_pstar(S, args.n, samples=args.samples, rng=rng)
    elif check == "kkt":
        if args.design:
            design = load_design(args.design)
        elif S.builtin:
            design = cubature_for_equilibrium(S, args.n)
        else:
            raise ValueError("custom sets need --design for the kkt check")
        rep = check_kkt_general(S, design, args.n, samples=args.samples, rng=rng)
    else:
        if args.exp is None:
            raise ValueError("weakstar needs --exp, the exponent of the test monomial")
        exp = _parse_ints(args.exp)
        if len(exp) != S.dim:
            raise ValueError(f"--exp needs {S.dim} entries")
        f = Polynomial(S.dim, {tuple(exp): 1.0})
        n_values = _parse_ints(args.n_values) if args.n_values else list(range(1, args.n + 1))
        rep = check_weakstar(S, n_values, f)
    obj = rep.to_json()
    obj["set"] = _set_json(S)
    obj["seed"] = args.seed
    _emit(_dump(obj), args.out)
    log.info("%s: %s (residual %.3e, tolerance %.3e)", rep.name,
             "pass" if rep.passed else "FAIL", rep.residual, rep.tolerance)


# parser

def _common(p, need_n=True):
    p.add_argument("--set", required=True,
                   help="interval, ball, box, simplex or custom:<file.json>")
    p.add_argument("--dim", type=int, default=None, help="dimension (1 for interval)")
    if need_n:
        p.add_argument("--n", type=int, required=True, help="design degree n")
    p.add_argument("--add-ball", type=float, default=None, metavar="M",
                   help="append the redundant constraint M - |x|^2 >= 0 to a custom set")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="cap on BLAS/OpenMP threads (default: $EQDESIGN_THREADS)")
    p.add_argument("--out", default=None,
                   help="output file, - for stdout (default: stdout; design.json for solve, "
                        "rule.csv for cubature)")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eqdesign", description="Optimal designs and equilibrium measures "
                     "on semi-algebraic sets.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("moments", help="moments of the equilibrium measure")
    _common(p, need_n=False)
    p.add_argument("--n", type=int, default=None, help="shorthand for --degree 2n")
    p.add_argument("--degree", type=int, default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("solve", help="optimal design by the classical or variant objective")
    _common(p)
    p.add_argument("--objective", choices=("classic", "classical", "variant"), default="classic")
    p.add_argument("--grid", default="auto", help="'auto' or a CSV of candidate points")
    p.add_argument("--tol", type=float, default=1e-6, help="relative equivalence-gap target")
    p.add_argument("--max-iter", type=int, default=5000)
    p.set_defaults(func=cmd_solve, out="design.json")

    p = sub.add_parser("cubature", help="positive rule exact to degree 2n for the equilibrium "
                       "measure")
    _common(p)
    p.set_defaults(func=cmd_cubature, out="rule.csv")

    p = sub.add_parser("christoffel", help="kernel diagonal K and Christoffel function on points")
    _common(p)
    p.add_argument("--points", default=None, help="CSV of evaluation points")
    p.add_argument("--at", action="append", default=None, metavar="X1,...,XD",
                   help="single evaluation point (repeatable)")
    p.add_argument("--resolution", type=int, default=101,
                   help="per-axis points of the bounding-box grid when no points are given")
    p.add_argument("--design", default=None,
                   help="design.json whose kernel is evaluated (default: equilibrium measure)")
    p.set_defaults(func=cmd_christoffel)

    p = sub.add_parser("verify", help="identity and optimality checks")
    p.add_argument("check", choices=CHECKS)
    _common(p)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--design", default=None, help="design.json for the kkt check")
    p.add_argument("--exp", default=None, help="exponent of the weakstar monomial, e.g. 6,6")
    p.add_argument("--n-values", default=None, help="degrees for weakstar (default 1..n)")
    p.set_defaults(func=cmd_verify)
    return parser


def _threads(args) -> int | None:
    if args.threads is not None:
        value = args.threads
    else:
        env = os.environ.get("EQDESIGN_THREADS")
        if not env:
            return None
        try:
            value = int(env)
        except ValueError as exc:
            raise ValueError(f"EQDESIGN_THREADS must be an integer, got {env!r}") from exc
    if value < 1:
        raise ValueError("thread count must be positive")
    return value


def run(argv=None) -> int:
    """Parse ``argv`` and run one subcommand; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    logging.getLogger("eqdesign").setLevel(level)
    rng = np.random.default_rng(args.seed)
    try:
        threads = _threads(args)
        with threadpool_limits(limits=threads):
            args.func(args, rng)
    except (NumericalError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"eqdesign: numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except (ValueError, OverflowError, OSError) as exc:
        sys.stderr.write(f"eqdesign: {exc}\n")
        return EXIT_USAGE
    return EXIT_OK


def main():
    sys.exit(run())
