"""``fkl`` command line: run experiment specs, render reports, and call single operations.

Exit codes: 0 success, 2 schema or input error, 3 resource ceiling, 4 oracle refusal.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import FKLError, SchemaError
from .fk_reference import jensen_reference, mahler_quadrature, series_log_det
from .group_ring import DEFAULT_SUPPORT_CEILING, Zd, format_matrix, parse_group, parse_matrix
from .harness import load_record, load_spec, report, run
from .lattice import (
    det_exact,
    rank_info,
    rank_perturbation,
    small_vector_count,
    small_vector_count_enumerate,
    smith_normal_form,
)
from .sofic import IntegerBlockMatrix, cyclic_sofic, lift, random_hom_sofic, read_matrix_market
from .spectral import log_det_plus_rate, singular_spectrum
from .entropy import ball_shift_overlap


def _group_arg(args):
    if getattr(args, "group", None):
        return parse_group(args.group)
    return Zd(getattr(args, "d", None) or 1)


def _add_element_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--element", required=True, help='element or matrix text, e.g. "x-2" or "[x, 1; 0, y]"')
    g = p.add_mutually_exclusive_group()
    g.add_argument("--group", help="Zd(d) or Free(r)")
    g.add_argument("--d", type=int, help="shorthand for Zd(d)")


def _add_sofic_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cyclic", type=int, nargs="+", metavar="N", help="torus side lengths")
    p.add_argument("--degree", type=int, help="degree of a random-homomorphism approximation")
    p.add_argument("--seed", type=int, default=0)


def _sofic(args, group):
    if args.cyclic:
        return cyclic_sofic(args.cyclic, group)
    if args.degree:
        if group.kind != "Free":
            raise SchemaError("random homomorphisms need a free group", "--group")
        return random_hom_sofic(group.rank, args.degree, args.seed)
    raise SchemaError("give --cyclic or --degree", "--cyclic")


def _print_value(value, error, method, extra: dict | None = None) -> None:
    out = {"value": value, "error": error, "method": method}
    out.update(extra or {})
    print(json.dumps(out))


def cmd_run(args) -> int:
    spec = load_spec(args.spec)
    rec = run(spec, out=args.out, threads=args.threads)
    if args.out is None and spec.get("output") is None:
        sys.stdout.write(rec.csv)
    else:
        print(f"{rec.name}: {len(rec.rows)} rows written to {args.out or spec.get('output')}")
    return 0


def cmd_report(args) -> int:
    records = [load_record(p) for p in args.records]
    svg, text = report(records)
    sys.stdout.write(text)
    if svg is not None:
        target = Path(args.svg) if args.svg else Path(args.records[0]).with_suffix(".svg")
        target.write_text(svg)
        print(f"svg written to {target}")
    return 0


def cmd_mahler(args) -> int:
    F = parse_matrix(args.element, _group_arg(args))
    r = mahler_quadrature(F, args.tol)
    _print_value(r.value, r.error, r.method, {"tolerance_met": r.tolerance_met})
    return 0


def cmd_jensen(args) -> int:
    F = parse_matrix(args.element, Zd(1))
    r = jensen_reference(F[0, 0])
    _print_value(r.value, r.error, r.method, r.params)
    return 0


def cmd_series(args) -> int:
    F = parse_matrix(args.element, _group_arg(args))
    lam = Fraction(args.lam) if args.lam else None
    r = series_log_det(F, args.k_max, lam, tol=args.tol, support_limit=args.support_limit)
    _print_value(r.value, r.error, r.method, {**r.params, "tolerance_met": r.tolerance_met})
    return 0


def _read_matrix(path: str) -> np.ndarray:
    return read_matrix_market(path)


def cmd_snf(args) -> int:
    T = _read_matrix(args.matrix)
    snf = smith_normal_form(T)
    print("invariant factors: " + " ".join(str(a) for a in snf.invariant_factors))
    if args.transforms:
        for name, M in (("U", snf.U), ("D", snf.D), ("V", snf.V)):
            print(f"{name} =")
            for row in M:
                print("  " + " ".join(str(v) for v in row))
    return 0


def cmd_rank(args) -> int:
    info = rank_info(_read_matrix(args.matrix))
    print(json.dumps({"rank": info.rank, "method": info.method}))
    return 0


def cmd_det(args) -> int:
    print(det_exact(_read_matrix(args.matrix)))
    return 0


def cmd_lift(args) -> int:
    group = _group_arg(args)
    F = parse_matrix(args.element, group)
    A = lift(_sofic(args, group), F)
    text = A.to_matrix_market()
    if args.out:
        Path(args.out).write_text(text)
        print(f"{A.shape[0]}x{A.shape[1]} lift of {format_matrix(F)} written to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def _block_matrix(args) -> IntegerBlockMatrix:
    if args.matrix:
        arr = _read_matrix(args.matrix)
        return IntegerBlockMatrix.from_dense(arr, d=args.block or 1)
    group = _group_arg(args)
    return lift(_sofic(args, group), parse_matrix(args.element, group))


def cmd_spectrum(args) -> int:
    M = singular_spectrum(_block_matrix(args))
    text = M.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"# log_det_plus_rate={log_det_plus_rate(M)!r} zero_count={M.zero_count}", file=sys.stderr)
    return 0


def cmd_perturb(args) -> int:
    X = rank_perturbation(_block_matrix(args), args.mode)
    print(
        json.dumps(
            {
                "rank": X.rank,
                "rank_method": X.rank_method,
                "rows_excluded": X.rows_excluded,
                "cols_excluded": X.cols_excluded,
                "agreement_fraction": X.agreement_fraction,
                "perturbation_bound": X.perturbation_bound,
                "det_certified_nonzero": X.det_certified_nonzero,
                "correction": [list(c) for c in X.correction],
            }
        )
    )
    return 0


def cmd_count_small(args) -> int:
    r = Fraction(args.r)
    value = small_vector_count_enumerate(args.n, r) if args.enumerate else small_vector_count(args.n, r)
    print(value)
    return 0


def cmd_overlap(args) -> int:
    est = ball_shift_overlap(args.n, args.R, args.s, args.samples, args.seed)
    print(json.dumps({"estimate": est.estimate, "stderr": est.stderr, "samples": est.samples}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fkl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment spec")
    p.add_argument("spec")
    p.add_argument("--out", help="output directory for CSV and JSON")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="summarize records and plot them as SVG")
    p.add_argument("records", nargs="+")
    p.add_argument("--svg", help="SVG output path (default: next to the first record)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("mahler", help="Mahler measure by quadrature")
    _add_element_args(p)
    p.add_argument("--tol", type=float, default=1e-8)
    p.set_defaults(func=cmd_mahler)

    p = sub.add_parser("jensen", help="one-variable Mahler measure from roots")
    p.add_argument("--element", required=True)
    p.set_defaults(func=cmd_jensen)

    p = sub.add_parser("series", help="log determinant by the moment series")
    _add_element_args(p)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--lam", help="spectral upper bound (rational)")
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--support-limit", type=int, default=DEFAULT_SUPPORT_CEILING, help="group-ring support ceiling")
    p.set_defaults(func=cmd_series)

    for name, func, helptext in (
        ("snf", cmd_snf, "Smith normal form of a Matrix Market matrix"),
        ("rank", cmd_rank, "exact rank"),
        ("det", cmd_det, "exact determinant"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--matrix", required=True, help="Matrix Market file")
        if name == "snf":
            p.add_argument("--transforms", action="store_true", help="also print U, D, V")
        p.set_defaults(func=func)

    p = sub.add_parser("lift", help="sofic lift as Matrix Market")
    _add_element_args(p)
    _add_sofic_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_lift)

    for name, func, helptext in (
        ("spectrum", cmd_spectrum, "singular-value spectral measure as CSV"),
        ("perturb", cmd_perturb, "rank perturbation summary"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--element")
        g = p.add_mutually_exclusive_group()
        g.add_argument("--group")
        g.add_argument("--d", type=int)
        _add_sofic_args(p)
        p.add_argument("--matrix", help="Matrix Market file instead of a lift")
        p.add_argument("--block", type=int, help="block size d for --matrix")
        if name == "spectrum":
            p.add_argument("--out")
        else:
            p.add_argument("--mode", default="square-invertible", choices=["square-invertible", "dense-image"])
        p.set_defaults(func=func)

    p = sub.add_parser("count-small", help="integer points in the normalized l1 ball")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--r", required=True, help="radius (rational)")
    p.add_argument("--enumerate", action="store_true", help="use the enumeration oracle")
    p.set_defaults(func=cmd_count_small)

    p = sub.add_parser("overlap", help="Monte-Carlo ball shift overlap")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_overlap)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("spectrum", "perturb") and not args.matrix and not args.element:
        parser.error("give --element or --matrix")
    try:
        return args.func(args)
    except FKLError as exc:
        print(f"fkl: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"fkl: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
