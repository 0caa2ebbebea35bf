"""
Command-line interface.

Exit codes: 0 when every requested check passes, 1 when a check fails,
2 for usage errors (argparse), 3 for input/output errors.

The optional ``--config`` file is INI-style text with sections
``[operator]`` (n, s, m, flavor), ``[grid]`` (L, N), ``[potential]``
(spec, e.g. ``gaussian:4``), ``[geometry]`` (x0, R, jmax) and
``[sweeps]`` (jmax, betamax, orders, ds).  Command-line values win over
the file.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import bounds, diagnostics, kernels, localization, solver
from . import spectral_core as sc

log = logging.getLogger("nonlocal_analytic")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


class CheckFailed(Exception):
    pass


def _config(path: str | None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    if path is not None:
        with open(path) as fh:  # raises OSError for the I/O exit path
            cfg.read_file(fh)
    return cfg


def _pick(args, cfg, name: str, section: str, key: str, cast, default):
    val = getattr(args, name, None)
    if val is not None:
        return val
    if cfg.has_option(section, key):
        return cast(cfg.get(section, key))
    return default


def _operator(args, cfg) -> sc.OperatorSpec:
    n = _pick(args, cfg, "n", "operator", "n", int, 1)
    flavor = _pick(args, cfg, "flavor", "operator", "flavor", str, sc.MASSIVE)
    if flavor == sc.MASSLESS_SHIFTED:
        return sc.OperatorSpec.massless(n)
    s = _pick(args, cfg, "s", "operator", "s", float, 0.5)
    m = _pick(args, cfg, "m", "operator", "m", float, 1.0)
    return sc.OperatorSpec(n, s, m, flavor)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=float))


# ---------------------------------------------------------------------------
# subcommands

def cmd_kernel(args, cfg, out: Path) -> dict:
    op = _operator(args, cfg)
    radii = np.logspace(np.log10(args.rmin), np.log10(args.rmax), args.count)
    qcfg = kernels.DEFAULT_CONFIG
    rows = kernels.kernel_table(op, radii, qcfg)
    kernels.write_kernel_table(rows, out / "kernel_table.csv", out / "kernel_manifest.json", qcfg)
    return {"rows": len(rows), "passed": True}


def cmd_solve(args, cfg, out: Path) -> dict:
    op = _operator(args, cfg)
    N = _pick(args, cfg, "N", "grid", "N", int, 1024)
    L = _pick(args, cfg, "L", "grid", "L", float, 12.0)
    spec = _pick(args, cfg, "potential", "potential", "spec", str, "gaussian:4")
    V = bounds.PotentialSpec.from_string(op.n, spec, s=op.s)
    res = solver.solve_eigen(op, V, sc.GridSpec(op.n, L, N), tol=args.tol)
    res.save(out, "phi")
    info = res.sidecar()
    info["passed"] = bool(res.converged and res.residual <= args.tol)
    return info


def cmd_verify_localization(args, cfg, out: Path) -> dict:
    jmax = _pick(args, cfg, "jmax", "sweeps", "jmax", int, 6)
    rows = []
    for n in args.dims:
        rows.extend(localization.localization_sweep(n, range(1, jmax + 1), chains=3,
                                                    ells="all" if n == 1 else "ends", seed=args.seed))
    passed = all(r["partition_passed"] and r["max_residual"] <= 1e-8 for r in rows)
    _write_json(out / "localization_report.json", {"rows": rows, "passed": passed})
    return {"cases": len(rows), "passed": passed}


def cmd_verify_smoothing(args, cfg, out: Path) -> dict:
    rows, slopes = [], []
    ops = []
    for n in args.dims:
        ops += [sc.OperatorSpec(n, 0.5, 1.0), sc.OperatorSpec(n, 0.7, 1.0), sc.OperatorSpec.massless(n)]
    for op in ops:
        for order in args.orders:
            r, slope = bounds.smoothing_chain(op, order, tuple(args.ds), seed=args.seed)
            rows += r
            target = order - 2 * op.s
            slopes.append({"n": op.n, "flavor": op.flavor, "s": op.s, "order": order,
                           "slope": slope, "exponent": target, "ok": abs(slope - target) <= 0.3})
    bounds.write_certificates(rows, out / "certificates.csv", out / "certificates.json")
    passed = all(r["pass"] for r in rows) and all(s["ok"] for s in slopes)
    _write_json(out / "slopes.json", slopes)
    return {"cases": len(rows), "failed": sum(not r["pass"] for r in rows), "passed": passed}


def cmd_verify_combinatorics(args, cfg, out: Path) -> dict:
    jmax = _pick(args, cfg, "jmax", "sweeps", "jmax", int, 40)
    betamax = _pick(args, cfg, "betamax", "sweeps", "betamax", int, 60)
    rep = bounds.combinatorial_checks(jmax, args.n or 1, args.A, args.B, betamax)
    _write_json(out / "combinatorics.json", rep.as_dict())
    return rep.as_dict()


def cmd_report(args, cfg, out: Path) -> dict:
    phi, _ = sc.read_field(args.field)
    x0 = [float(v) for v in str(_pick(args, cfg, "x0", "geometry", "x0", str, "0")).split(",")]
    R = _pick(args, cfg, "R", "geometry", "R", float, 0.5)
    jmax = _pick(args, cfg, "jmax", "geometry", "jmax", int, 10)
    if len(x0) == 1:
        x0 = x0 * phi.grid.n
    rep = diagnostics.derivative_growth_report(phi, x0, R, jmax)
    _write_json(out / "analyticity_report.json", rep.as_dict())
    return {"verdict": rep.verdict, "C": rep.C, "B": rep.B, "passed": True}


def cmd_all(args, cfg, out: Path) -> dict:
    results = {}
    ns = argparse.Namespace(**vars(args))
    for name, fn, extra in (
        ("combinatorics", cmd_verify_combinatorics, {"n": 1, "A": 1.0, "B": 2.5, "jmax": None, "betamax": None}),
        ("localization", cmd_verify_localization, {"dims": [1, 2], "jmax": None}),
        ("smoothing", cmd_verify_smoothing, {"dims": [1, 3], "orders": [2, 3, 4], "ds": [0.25, 0.5, 1.0]}),
        ("solve", cmd_solve, {"n": 1, "s": 0.5, "m": 1.0, "flavor": sc.MASSIVE, "N": 1024, "L": 12.0,
                              "potential": "gaussian:4", "tol": 1e-8}),
    ):
        for k, v in extra.items():
            setattr(ns, k, v)
        sub = out / name
        sub.mkdir(parents=True, exist_ok=True)
        results[name] = fn(ns, cfg, sub)
    ns.field = str(out / "solve" / "phi.bin")
    ns.x0, ns.R, ns.jmax = "0", 0.5, 10
    results["report"] = cmd_report(ns, cfg, out / "solve")
    results["report"]["passed"] = results["report"]["verdict"] == diagnostics.CONSISTENT
    results["passed"] = all(r.get("passed", False) for r in results.values() if isinstance(r, dict))
    return results


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nonlocal-analytic", description=__doc__.splitlines()[1])
    p.add_argument("--config", help="INI-style run description")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def op_args(q):
        q.add_argument("--n", type=int)
        q.add_argument("--s", type=float)
        q.add_argument("--m", type=float)
        q.add_argument("--flavor", choices=sc.FLAVORS)

    q = sub.add_parser("kernel", help="tabulate the inverse-operator kernel")
    op_args(q)
    q.add_argument("--rmin", type=float, default=0.01)
    q.add_argument("--rmax", type=float, default=10.0)
    q.add_argument("--count", type=int, default=25)
    q.set_defaults(func=cmd_kernel)

    q = sub.add_parser("solve", help="ground state of E phi = V phi")
    op_args(q)
    q.add_argument("--potential")
    q.add_argument("--N", type=int)
    q.add_argument("--L", type=float)
    q.add_argument("--tol", type=float, default=1e-8)
    q.set_defaults(func=cmd_solve)

    q = sub.add_parser("verify-localization", help="partition identities and decomposition residuals")
    q.add_argument("--jmax", type=int)
    q.add_argument("--dims", type=int, nargs="+", default=[1, 2])
    q.set_defaults(func=cmd_verify_localization)

    q = sub.add_parser("verify-smoothing", help="smoothing-estimate certificate sweep")
    q.add_argument("--dims", type=int, nargs="+", default=[1, 3])
    q.add_argument("--orders", type=int, nargs="+", default=[2, 3, 4])
    q.add_argument("--ds", type=float, nargs="+", default=[0.25, 0.5, 1.0])
    q.set_defaults(func=cmd_verify_smoothing)

    q = sub.add_parser("verify-combinatorics", help="exact induction inequalities")
    q.add_argument("--jmax", type=int)
    q.add_argument("--betamax", type=int)
    q.add_argument("--n", type=int)
    q.add_argument("--A", type=float, default=1.0)
    q.add_argument("--B", type=float, default=2.5)
    q.set_defaults(func=cmd_verify_combinatorics)

    q = sub.add_parser("report", help="analyticity diagnostic of a stored field")
    q.add_argument("--field", required=True)
    q.add_argument("--x0")
    q.add_argument("--R", type=float)
    q.add_argument("--jmax", type=int)
    q.set_defaults(func=cmd_report)

    q = sub.add_parser("all", help="run the full verification pipeline")
    q.set_defaults(func=cmd_all)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    sc.FFT_WORKERS = max(1, args.threads)
    try:
        cfg = _config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        result = args.func(args, cfg, out)
        log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
    except (OSError, sc.FieldFormatError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps(result, sort_keys=True, default=float))
    return EXIT_OK if result.get("passed", False) else EXIT_FAIL


cli_main = main

if __name__ == "__main__":
    sys.exit(main())
