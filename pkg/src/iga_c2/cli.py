"""Command line interface ``iga-c2``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .basisspace import assemble_space
from .errors import IGAError
from .multipatch import DOMAIN_DIR, load_domain
from .polynomials2d import BUILTIN_IDS
from .study import StudyConfig, check_space, kappa_slope, run_study

log = logging.getLogger("iga_c2")


def _domain(arg: str):
    path = Path(arg)
    if not path.exists() and (DOMAIN_DIR / f"{arg}.json").exists():
        path = DOMAIN_DIR / f"{arg}.json"
    return load_domain(path)


def _klist(text: str):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad k list {text!r}") from exc


def cmd_space(args) -> int:
    dom = _domain(args.domain)
    basis = assemble_space(dom, args.p, args.r, args.k)
    per_vertex = {}
    for f in basis.block("vertex"):
        per_vertex[f.index[0]] = per_vertex.get(f.index[0], 0) + 1
    per_edge = {}
    for f in basis.block("edge"):
        per_edge[f.index[0]] = per_edge.get(f.index[0], 0) + 1
    summary = {
        "P": dom.P, "E": dom.E, "V": dom.V,
        "p": args.p, "r": args.r, "k": args.k, "d": basis.space.dim,
        "patch": [len(basis.block("patch")) // max(dom.P, 1)] * dom.P,
        "edge": [per_edge.get(s, 0) for s in range(dom.E)],
        "vertex": [per_vertex.get(v, 0) for v in range(dom.V)],
        "dim": basis.dim,
    }
    print(json.dumps(summary))
    if args.export:
        Path(args.export).write_text(basis.to_json())
        log.info("basis written to %s", args.export)
    if args.check:
        res = check_space(basis)
        ok = (res["rank"] == res["dim"] and res["interface_jump"] < 1e-9
              and res["boundary_jet"] < 1e-10)
        print(json.dumps({**res, "ok": ok}))
        return 0 if ok else 1
    return 0


def cmd_solve(args) -> int:
    cfg = StudyConfig(_domain(args.domain), args.p, args.r, args.klist, args.solution,
                      out=args.out, cond=args.cond, export_matrix=args.export_matrix)
    report = run_study(cfg)
    cols = ["k", "dim", "err_h0", "err_h1", "err_h2", "err_h3",
            "rate_h0", "rate_h1", "rate_h2", "rate_h3", "kappa_raw", "kappa_jacobi", "seconds"]
    print(",".join(cols))
    for row in report.rows:
        print(",".join("" if row.get(c) is None else f"{row[c]:.4g}" for c in cols))
        if row.get("error"):
            print(f"# k={row['k']}: {row['error']}", file=sys.stderr)
    if args.cond and sum(1 for r in report.rows if r.get("kappa_raw")) >= 2:
        print(f"# kappa slope raw {kappa_slope(report):.2f} "
              f"jacobi {kappa_slope(report, 'kappa_jacobi'):.2f}")
    return 1 if any(r.get("error") for r in report.rows) else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iga-c2",
                                 description="C^2-smooth multi-patch spline spaces and "
                                             "triharmonic solves")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("space", help="construct the space and report its dimensions")
    sp.add_argument("--domain", required=True, help="domain JSON file or builtin name")
    sp.add_argument("-p", type=int, default=5)
    sp.add_argument("-r", type=int, default=2)
    sp.add_argument("-k", type=int, default=5)
    sp.add_argument("--export", help="write the basis as JSON")
    sp.add_argument("--check", action="store_true",
                    help="verify smoothness, boundary conditions and independence")
    sp.set_defaults(func=cmd_space)

    so = sub.add_parser("solve", help="run a refinement study")
    so.add_argument("--domain", required=True, help="domain JSON file or builtin name")
    so.add_argument("-p", type=int, default=5)
    so.add_argument("-r", type=int, default=2)
    so.add_argument("--klist", type=_klist, default=[3, 7, 15])
    so.add_argument("--solution", default="a", choices=BUILTIN_IDS)
    so.add_argument("--out", help="CSV report path (a .json mirror is written next to it)")
    so.add_argument("--cond", action="store_true", help="estimate condition numbers")
    so.add_argument("--export-matrix", metavar="DIR",
                    help="write S (Matrix Market) and f (text) for every k into DIR")
    so.set_defaults(func=cmd_solve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (IGAError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
