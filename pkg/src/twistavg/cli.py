"""Command-line entry point: ``twistavg verify | sweep | probe``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import mpmath

from .harness import PROBES, ComponentError, RunConfig, probe, sweep, verify_identity


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twistavg", description="Numerical checks of a twisted first-moment identity.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    v = sub.add_parser("verify", help="evaluate both sides of the identity for one configuration")
    v.add_argument("--k", type=int, default=12)
    v.add_argument("--N", type=int, default=1)
    v.add_argument("--D", type=int, default=1)
    v.add_argument("--chi", default=None, help='character label "e1,e2" or "D:e1,e2"; default first primitive')
    v.add_argument("--psi", default=None, help="nebentypus label mod N; default trivial")
    v.add_argument("--r", type=int, default=1)
    v.add_argument("--n", type=int, default=1)
    v.add_argument("--s", default="9", help="RE or RE+IMi")
    v.add_argument("--cutoff-a", type=int, default=10_000)
    v.add_argument("--cutoff-d", type=int, default=1_000)
    v.add_argument("--prec", type=int, default=128, help="working precision in bits")
    v.add_argument("--tol", type=float, default=1e-6, help="tolerance relative to |identity term|")
    v.add_argument("--out", default=None, help="write the JSON report here")
    v.add_argument("--timings", action="store_true", help="include wall-clock timings in the JSON")
    v.add_argument("--strict", action="store_true", help="also require residual + budget <= tolerance")

    s = sub.add_parser("sweep", help="tabulate magnitudes, q_ratio and e_bound over a grid")
    s.add_argument("--grid", required=True, help="JSON file with defaults / product / rows")
    s.add_argument("--out", default=None, help="CSV output path (stdout if omitted)")

    p = sub.add_parser("probe", help="evaluate one named sub-formula")
    p.add_argument("name")
    p.add_argument("args", nargs="*", help="key=value pairs or a positional tuple such as (9,12,0)")
    return ap


def _verify(ns) -> int:
    cfg = RunConfig(
        mode="verify",
        k=ns.k,
        N=ns.N,
        D=ns.D,
        chi_label=ns.chi,
        psi_label=ns.psi,
        r=ns.r,
        n=ns.n,
        s=ns.s,
        cutoff_a=ns.cutoff_a,
        cutoff_d=ns.cutoff_d,
        bits=ns.prec,
        tol=ns.tol,
        out=ns.out,
    )
    rep = verify_identity(cfg)
    text = rep.to_json(include_timings=ns.timings)
    if ns.out:
        Path(ns.out).write_text(text)
    else:
        sys.stdout.write(text)
    ok = rep.ok and (rep.certified or not ns.strict)
    res = "n/a" if rep.residual is None else mpmath.nstr(rep.residual, 6)
    times = ", ".join(f"{key} {v:.2f}s" for key, v in rep.timings.items())
    print(
        f"[{rep.mode}] residual {res}  budget {mpmath.nstr(rep.budget, 6)}  "
        f"tolerance {mpmath.nstr(rep.tolerance, 6)}  bound_ok {rep.bound_ok}  pass {rep.pass_}  "
        f"certified {rep.certified}  ({times})",
        file=sys.stderr,
    )
    return 0 if ok else 1


def _sweep(ns) -> int:
    grid = json.loads(Path(ns.grid).read_text())
    text = sweep(grid)
    if ns.out:
        Path(ns.out).write_text(text)
    else:
        sys.stdout.write(text)
    failed = sum(1 for row in csv.DictReader(io.StringIO(text)) if row["error"])
    return 0 if failed == 0 else 1


def _probe(ns) -> int:
    try:
        val, tag = probe(ns.name, ns.args)
    except KeyError:
        print(f"unknown probe {ns.name!r}; available probes:", file=sys.stderr)
        for name in sorted(PROBES):
            print(f"  {name}({', '.join(PROBES[name].params)}): {PROBES[name].tag}", file=sys.stderr)
        return 2
    print(f"value: {mpmath.nstr(val.value, 30)}")
    print(f"err:   {mpmath.nstr(val.err, 6)}")
    print(f"tag:   {tag}")
    return 0


def main(argv: list[str] | None = None) -> int:
    ns = _build_parser().parse_args(argv)
    try:
        if ns.cmd == "verify":
            return _verify(ns)
        if ns.cmd == "sweep":
            return _sweep(ns)
        return _probe(ns)
    except (ValueError, ComponentError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
