"""Command-line front end.

Exit codes: 0 when every residual vanishes, 1 on a verification failure,
2 on malformed input.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path

from .algebra import HbarSeries, ParseError, standard_universe, theta_universe
from .feynman import enumerate_graphs
from .lie import LieAlgebra
from .momentum import (
    SUITES,
    Check,
    QmmError,
    bundled_models,
    load_bundle,
    qmm_apply,
    run_suite,
    verify_mc,
)
from .quantization import gutt_via_phase, star_standard

MAX_GRAPH_POWER = 6


class InputError(Exception):
    pass


def _emit(payload, args, text=None):
    if args.format == "text" and text is not None:
        out = text
    else:
        out = json.dumps(payload, indent=2, sort_keys=False)
    if args.out:
        Path(args.out).write_text(out + "\n")
    else:
        print(out)


def _series_payload(s: HbarSeries) -> dict:
    return {str(k): str(c) for k, c in enumerate(s.coeffs) if c} or {"0": "0"}


def _load_algebra(source: str | None, fallback_dim: int) -> LieAlgebra:
    """An algebra file, a model bundle (its algebra), a bundled model name, or
    the abelian algebra of the fallback dimension when nothing is given."""
    if source is None:
        return LieAlgebra(fallback_dim, {}, name=f"abelian{fallback_dim}")
    p = Path(source)
    if not p.exists():
        cand = Path(__file__).parent / "data" / "models" / (p.name if p.suffix else p.name + ".json")
        if not cand.exists():
            raise InputError(f"no algebra or model file {source!r}")
        p = cand
    data = json.loads(p.read_text())
    if "algebra" in data:
        data = data["algebra"]
        if isinstance(data, str):
            data = json.loads((p.parent / data).read_text())
    alg = LieAlgebra.from_dict(data, name=p.stem)
    alg.validate()
    return alg


def _max_index(texts, family):
    idx = [int(m) for t in texts for m in re.findall(rf"\b{family}(\d+)", t)]
    return max(idx, default=1)


# ---------------------------------------------------------------------------
# subcommands


def cmd_star(args) -> int:
    N = args.order
    if args.kind == "gutt":
        n = args.dim or _max_index([args.f, args.g], "th")
        alg = _load_algebra(args.algebra, n)
        T = theta_universe(alg.dim)
        f, g = T.parse(args.f), T.parse(args.g)
        if args.route == "pbw":
            res = alg.gutt_pbw(f, g, N)
        else:
            res = gutt_via_phase(alg, f, g, N)
    else:
        d = args.dim or max(_max_index([args.f, args.g], "x"), _max_index([args.f, args.g], "xi"))
        U = standard_universe(d, 1)
        f, g = U.parse(args.f), U.parse(args.g)
        if f.degree("th") > 0 or g.degree("th") > 0 or f.degree("v") > 0 or g.degree("v") > 0:
            raise InputError("standard product symbols may only use x and xi")
        res = star_standard(f, g, N)
    _emit(_series_payload(res), args, str(res))
    return 0


def _model(args, check_mc=True):
    return load_bundle(args.model, N=args.order, M=args.vdeg, check_mc=check_mc)


def cmd_qmm(args) -> int:
    if args.sub == "apply":
        model = _model(args)
        if args.u is None:
            raise InputError("qmm apply needs --u")
        res = qmm_apply(model, model.universe.parse(args.u))
        _emit(_series_payload(res), args, str(res))
        return 0
    suites = [s.strip() for s in (args.suite or ",".join(SUITES)).split(",") if s.strip()]
    bad = [s for s in suites if s not in SUITES]
    if bad:
        raise InputError(f"unknown suite(s) {', '.join(bad)}; choose from {', '.join(SUITES)}")
    model = _model(args, check_mc=False)
    mc = verify_mc(model)
    checks: list[Check] = []
    if "mc" in suites:
        checks.append(mc)
    reports = [c.to_dict() for c in checks]
    if mc.ok:
        model = _model(args, check_mc=False)
        model.mc_report = mc
        for s in suites:
            if s == "mc":
                continue
            for c in run_suite(model, s, deg=args.deg):
                checks.append(c)
                reports.append(c.to_dict())
    else:
        for s in suites:
            if s != "mc":
                reports.append({"test": s, "inputs": {"model": model.name}, "residual": None,
                                "status": "SKIP", "note": "G-system fails the Maurer-Cartan equation"})
    ok = mc.ok and all(c.ok for c in checks)
    summary = {"model": model.name, "N": model.N, "M": model.M, "ok": ok,
               "passed": sum(c.ok for c in checks), "failed": sum(not c.ok for c in checks)}
    text = "\n".join(f"{r['status']} {r['test']} {json.dumps(r['inputs'], sort_keys=True)}" for r in reports)
    _emit({"summary": summary, "checks": reports}, args, text + f"\n{'OK' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_gsystem(args) -> int:
    model = _model(args, check_mc=False)
    c = verify_mc(model)
    _emit(c.to_dict(), args, f"{c.status} mc {model.name}")
    return 0 if c.ok else 1


def cmd_graphs(args) -> int:
    if args.max_power > MAX_GRAPH_POWER:
        raise InputError(f"--max-power is limited to {MAX_GRAPH_POWER}")
    if args.ext < 1 or args.max_power < 0:
        raise InputError("need --ext >= 1 and --max-power >= 0")
    graphs = enumerate_graphs(args.ext, args.max_power)
    payload = [g.to_dict() for g in graphs]
    text = "\n".join(json.dumps(p, sort_keys=True) for p in payload) + f"\n{len(payload)} graphs"
    _emit(payload, args, text)
    return 0


def cmd_casimir(args) -> int:
    source = args.algebra or args.model
    n = args.dim or _max_index([args.f], "th")
    alg = _load_algebra(source, n)
    T = theta_universe(alg.dim)
    f = T.parse(args.f)
    ok, res = alg.is_casimir(f)
    payload = {"f": str(f), "casimir": ok, "residuals": {f"th{k + 1}": str(r) for k, r in enumerate(res)}}
    _emit(payload, args, ("PASS" if ok else "FAIL") + f" casimir {f}")
    return 0 if ok else 1


def cmd_report(args) -> int:
    names = [args.model] if args.model else [m for m in bundled_models() if m != "broken_gsystem"]
    out = []
    ok = True
    for name in names:
        model = load_bundle(name, N=args.order, M=args.vdeg, check_mc=False)
        mc = verify_mc(model)
        entry = {"model": model.name, "N": model.N, "M": model.M, "suites": {}}
        entry["suites"]["mc"] = mc.status
        for s in SUITES[1:]:
            if s == "casimir" and not model.casimirs:
                continue
            if not mc.ok:
                entry["suites"][s] = "SKIP"
                continue
            checks = run_suite(model, s, deg=args.deg)
            entry["suites"][s] = f"{sum(c.ok for c in checks)}/{len(checks)} PASS"
            ok &= all(c.ok for c in checks)
        ok &= mc.ok
        out.append(entry)
    text = "\n".join(f"{e['model']}: " + ", ".join(f"{k} {v}" for k, v in e["suites"].items()) for e in out)
    _emit({"models": out, "ok": ok}, args, text)
    return 0 if ok else 1


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--order", type=int, default=None, help="hbar truncation order N")
    common.add_argument("--vdeg", type=int, default=None, help="v-degree truncation M (default 2N+2)")
    common.add_argument("--deg", type=int, default=2, help="test-function degree bound")
    common.add_argument("--model", default=None, help="model bundle (file or bundled name)")
    common.add_argument("--out", default=None, help="write output to this file")
    common.add_argument("--format", choices=("json", "text"), default="json")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="qmomap", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("star", parents=[common], help="Gutt or standard star product")
    s.add_argument("kind", choices=("gutt", "standard"))
    s.add_argument("--f", required=True)
    s.add_argument("--g", required=True)
    s.add_argument("--algebra", default=None, help="algebra or model file (gutt; abelian if omitted)")
    s.add_argument("--dim", type=int, default=None, help="dimension d (standard) or n (gutt)")
    s.add_argument("--route", choices=("pbw", "phase"), default="pbw", help="Gutt product route")
    s.set_defaults(func=cmd_star)

    q = sub.add_parser("qmm", parents=[common], help="quantum momentum map")
    q.add_argument("sub", choices=("apply", "verify"))
    q.add_argument("--u", default=None, help="polynomial in th (apply)")
    q.add_argument("--suite", default=None, help=f"comma-separated subset of {','.join(SUITES)}")
    q.set_defaults(func=cmd_qmm)

    g = sub.add_parser("gsystem", parents=[common], help="Maurer-Cartan check of a model's G-system")
    g.add_argument("sub", choices=("check",))
    g.set_defaults(func=cmd_gsystem)

    e = sub.add_parser("graphs", parents=[common], help="Feynman graph classes")
    e.add_argument("sub", choices=("enumerate",))
    e.add_argument("--ext", type=int, default=2)
    e.add_argument("--max-power", type=int, default=1)
    e.set_defaults(func=cmd_graphs)

    c = sub.add_parser("casimir", parents=[common], help="Casimir test on a Lie algebra")
    c.add_argument("sub", choices=("check",))
    c.add_argument("--f", required=True)
    c.add_argument("--algebra", default=None)
    c.add_argument("--dim", type=int, default=None)
    c.set_defaults(func=cmd_casimir)

    r = sub.add_parser("report", parents=[common], help="all suites on one or all bundled models")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.order is None and args.command == "star":
        args.order = 2
    try:
        return args.func(args)
    except (InputError, ParseError, QmmError, FileNotFoundError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
