"""Command-line interface: ``phaselock <command> [flags]``.

Exit codes: 0 success, 2 invalid parameters, 3 input/output failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .heun import entire_solution_score, entire_verdict, spectral_csv, spectral_scan
from .integrate import IntegrationBudgetError, OdeSettings
from .isomono import (
    dyn_foliation_flow,
    embed_josephson,
    isoflow_normalized,
    josephson_state,
    normalized_from_chart,
    trajectory_rows,
)
from .params import DomainError, PhysParams, ReducedParams, from_reduced, to_heun
from .poincare import rotation_number
from .portrait import asymptotic_error, build_portrait, find_constrictions, portrait_csv, portrait_json, portrait_svg
from .slowfast import EmptyCurveError, classify_slow_curve, convexity_certificate, slow_curve_svg

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 2, 3
WORKERS_ENV = "PHASELOCK_WORKERS"


class InvalidInput(ValueError):
    pass


def _settings(args) -> OdeSettings:
    return OdeSettings(rel_tol=args.rtol, abs_tol=args.atol)


def _meta(args, **extra) -> dict:
    meta = {"version": __version__, "command": args.command, "rel_tol": args.rtol, "abs_tol": args.atol,
            "seed": args.seed}
    meta.update(extra)
    return meta


def _emit(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _csv_text(meta: dict, header: list[str], rows) -> str:
    buf = io.StringIO()
    for key in sorted(meta):
        buf.write(f"# {key}: {meta[key]}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=True) + "\n"


def _workers(args) -> int:
    if args.workers is not None:
        n = args.workers
    else:
        raw = os.environ.get(WORKERS_ENV, "1")
        try:
            n = int(raw)
        except ValueError as exc:
            raise InvalidInput(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if n < 1:
        raise InvalidInput("worker count must be at least 1")
    return n


# ---------------------------------------------------------------- commands

def cmd_rotnum(args) -> int:
    res = rotation_number(PhysParams(args.B, args.A, args.omega), _settings(args))
    _emit(_json_text({"meta": _meta(args), "B": args.B, "A": args.A, "omega": args.omega, **res.to_json()}), args.out)
    return EXIT_OK


def cmd_portrait(args) -> int:
    if args.rmax < 0 or not args.amax > 0 or args.n_a < 2:
        raise InvalidInput("need rmax >= 0, amax > 0 and n-A >= 2")
    p = build_portrait(args.omega, args.rmax, args.amax, args.n_a, _workers(args), _settings(args))
    p.metadata["seed"] = args.seed
    wrote = False
    for fmt, path in (("json", args.json), ("csv", args.csv), ("svg", args.svg)):
        if path:
            text = {"json": portrait_json, "csv": portrait_csv, "svg": portrait_svg}[fmt](p)
            _emit(text, path)
            wrote = True
    if not wrote:
        _emit(portrait_json(p), None)
    return EXIT_OK


def cmd_constrictions(args) -> int:
    lo, hi = args.amin, args.amax
    cs = find_constrictions(args.ell, args.omega, (lo, hi), _settings(args), validate=not args.no_validate)
    header = ["ell", "A", "B", "omega", "residual", "defect", "heun_score", "heun_determinant", "type"]
    rows = [[c.ell, c.A, c.B, c.omega, c.residual, c.defect, c.heun_score, c.heun_determinant, c.type] for c in cs]
    _emit(_csv_text(_meta(args, A_range=f"[{lo}, {hi}]"), header, rows), args.out)
    return EXIT_OK


def cmd_isoflow(args) -> int:
    s = _settings(args)
    if args.foliation:
        rp = ReducedParams(args.ell, args.mu, args.eta)
        st = embed_josephson(from_reduced(rp))
        traj = dyn_foliation_flow(st, st.s + args.span, s)
        header, rows = trajectory_rows(traj, args.step, kind="foliation")
        variable = "s"
    else:
        if args.from_josephson:
            st = josephson_state(from_reduced(ReducedParams(args.ell, args.mu, args.eta)))
        else:
            if args.g21 is None or args.r21 is None or args.tau is None:
                raise InvalidInput("give --from-josephson or all of --g21 --r21 --tau")
            st = normalized_from_chart(args.g21, args.r21, args.ell, args.tau)
        traj = isoflow_normalized(st, st.tau + args.span, s, continue_outside=True)
        header, rows = trajectory_rows(traj, args.step)
        variable = "tau"
    meta = _meta(args, ell=args.ell, variable=variable, step=args.step, span=args.span)
    _emit(_csv_text(meta, header, rows), args.out)
    return EXIT_OK


def cmd_heun(args) -> int:
    if args.spectral:
        if args.ell is None or args.omega is None:
            raise InvalidInput("--spectral needs --ell and --omega")
        if not args.omega > 0:
            raise InvalidInput("omega must be positive")
        # default window A <= 2 + 2 ell omega covers the points near A = 1 + (ell - 1) omega
        mu_max = args.mu_max if args.mu_max is not None else (2.0 + 2.0 * args.ell * args.omega) / (2.0 * args.omega)
        roots = spectral_scan(args.ell, args.omega, mu_max)
        out = {"meta": _meta(args, mu_max=mu_max), "ell": args.ell, "omega": args.omega,
               "roots": [r.to_row() for r in roots],
               "A_P": max((r.A for r in roots), default=None)}
        if args.csv:
            _emit(spectral_csv(roots), args.csv)
        _emit(_json_text(out), args.out)
        return EXIT_OK
    if args.B is None or args.A is None or args.omega is None:
        raise InvalidInput("give --spectral or all of --B --A --omega")
    hp = to_heun(PhysParams(args.B, args.A, args.omega))
    score = entire_solution_score(hp, args.terms)
    out = {"meta": _meta(args), **hp.to_json(), "score": score, "verdict": entire_verdict(score)}
    _emit(_json_text(out), args.out)
    return EXIT_OK


def cmd_slowcurve(args) -> int:
    cls = classify_slow_curve(args.B, args.A)
    out = {"meta": _meta(args), "B": args.B, "A": args.A, "label": cls.label,
           "certificate": convexity_certificate(args.B, args.A)}
    if args.svg:
        try:
            _emit(slow_curve_svg(args.B, args.A), args.svg)
        except EmptyCurveError:
            out["svg"] = "empty curve: nothing drawn"
    _emit(_json_text(out), args.out)
    return EXIT_OK


def cmd_asym(args) -> int:
    rows = []
    for A in args.A:
        e0, epi = asymptotic_error(args.r, args.omega, A, _settings(args))
        scaled = e0 * A / math.log(A) if A > 1 else math.nan
        rows.append([args.r, args.omega, A, e0, epi, scaled])
    header = ["r", "omega", "A", "error_alpha0", "error_alphapi", "error_alpha0_times_A_over_logA"]
    _emit(_csv_text(_meta(args), header, rows), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--rtol", type=float, default=1e-10, help="relative ODE tolerance")
    common.add_argument("--atol", type=float, default=1e-12, help="absolute ODE tolerance")
    common.add_argument("--seed", type=int, default=0, help="recorded in output metadata")
    common.add_argument("--out", default=None, help="output path (default stdout)")

    parser = argparse.ArgumentParser(prog="phaselock", description="Phase-lock areas of the overdamped junction model.")
    parser.add_argument("--version", action="version", version=f"phaselock {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rotnum", parents=[common], help="rotation number at (B, A, omega)")
    p.add_argument("--B", type=float, required=True)
    p.add_argument("--A", type=float, required=True)
    p.add_argument("--omega", type=float, required=True)
    p.set_defaults(func=cmd_rotnum)

    p = sub.add_parser("portrait", parents=[common], help="phase-lock portrait for fixed omega")
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--rmax", type=int, default=4)
    p.add_argument("--amax", type=float, default=10.0)
    p.add_argument("--n-A", dest="n_a", type=int, default=101)
    p.add_argument("--json", default=None, help="JSON output path")
    p.add_argument("--csv", default=None, help="CSV output path")
    p.add_argument("--svg", default=None, help="SVG output path")
    p.add_argument("--workers", type=int, default=None, help=f"process count (default ${WORKERS_ENV} or 1)")
    p.set_defaults(func=cmd_portrait)

    p = sub.add_parser("constrictions", parents=[common], help="constrictions on the axis B = ell omega")
    p.add_argument("--ell", type=int, required=True)
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--amin", type=float, default=0.0)
    p.add_argument("--amax", type=float, default=10.0)
    p.add_argument("--no-validate", action="store_true", help="skip Heun cross-checks")
    p.set_defaults(func=cmd_constrictions)

    p = sub.add_parser("isoflow", parents=[common], help="isomonodromic trajectory as CSV")
    p.add_argument("--from-josephson", action="store_true", help="launch from the junction system (ell, mu, eta)")
    p.add_argument("--foliation", action="store_true", help="follow the dynamical foliation in s instead")
    p.add_argument("--ell", type=float, required=True)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--g21", type=float, default=None)
    p.add_argument("--r21", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--span", type=float, default=3.0)
    p.add_argument("--step", type=float, default=1e-3, help="sampling step of the CSV")
    p.set_defaults(func=cmd_isoflow)

    p = sub.add_parser("heun", parents=[common], help="entire-solution test or spectral-curve roots")
    p.add_argument("--spectral", action="store_true")
    p.add_argument("--ell", type=int, default=None)
    p.add_argument("--omega", type=float, default=None)
    p.add_argument("--mu-max", type=float, default=None)
    p.add_argument("--B", type=float, default=None)
    p.add_argument("--A", type=float, default=None)
    p.add_argument("--terms", type=int, default=200)
    p.add_argument("--csv", default=None, help="spectral roots as CSV (ell, omega, mu, lambda, A)")
    p.set_defaults(func=cmd_heun)

    p = sub.add_parser("slowcurve", parents=[common], help="slow-curve topology and certificate")
    p.add_argument("--B", type=float, required=True)
    p.add_argument("--A", type=float, required=True)
    p.add_argument("--svg", default=None)
    p.set_defaults(func=cmd_slowcurve)

    p = sub.add_parser("asym", parents=[common], help="boundary offsets from the Bessel asymptotics")
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--omega", type=float, required=True)
    p.add_argument("--A", type=float, nargs="+", required=True)
    p.set_defaults(func=cmd_asym)
    return parser


def _check_isoflow(args) -> None:
    if args.command == "isoflow" and (args.from_josephson or args.foliation):
        if args.mu is None or args.eta is None:
            raise InvalidInput("--mu and --eta are required with --from-josephson/--foliation")
    if args.command == "isoflow" and not args.step > 0:
        raise InvalidInput("--step must be positive")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        _check_isoflow(args)
        return args.func(args)
    except OSError as exc:
        print(f"phaselock: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except IntegrationBudgetError as exc:
        print(f"phaselock: integration failed: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DomainError, InvalidInput, EmptyCurveError, ValueError) as exc:
        print(f"phaselock: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
