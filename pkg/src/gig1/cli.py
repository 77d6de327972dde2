"""Command-line front end.

Exit codes: 0 success, 1 invalid input or failed validation, 2 numerical
non-convergence.  Every command that takes ``--out`` writes report.json
(``schema: 1``) there, plus the CSV files of the command.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import THEOREMS, analyze, log_grid
from .kernel import KernelError, audit_regime, read_kernel, validate_kernel, write_kernel
from .matan import NonConvergence, SolveOptions, solve
from .period import detect_period, spectral_period_check
from .stationary import (ORACLE_MAX_STATES, balance_residual, compare, oracle_solve,
                         read_stationary_csv, stationary)
from .tails import class_diagnostics, disaster_kernel, make_tail, mg1_pareto_kernel

SCHEMA = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for non-convergence
    def error(self, message):
        raise UsageError(message)


def _threads():
    n = os.environ.get("GIG1_THREADS")
    if not n:
        return contextlib.nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return contextlib.nullcontext()
    return threadpool_limits(limits=int(n))


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def _emit(report: dict, out: Path | None) -> None:
    report = {"schema": SCHEMA, **report}
    text = json.dumps(report, indent=1, sort_keys=True, default=_json_default, allow_nan=True)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(text + "\n")
    print(text)


def _opts(a) -> SolveOptions:
    if not a.kmax >= 1:
        raise UsageError("--kmax must be at least 1")
    if not 0 < a.tol <= 1e-2:
        raise UsageError("--tol must lie in (0, 1e-2]")
    return SolveOptions(tol=a.tol, kmax=a.kmax)


def _solve_report(k, a):
    art = solve(k, _opts(a))
    sr = stationary(k, art)
    rep = {
        "x0": sr.x0, "normalization_residual": sr.normalization_residual,
        "iterations": art.iterations, "checks": art.checks,
        "phi_rate": art.phi.meta["rate"], "phi_residual_bound": art.phi.residual_bound,
        "trusted_K": sr.meta.get("trusted_K"), "K": sr.K,
        "recursion_discrepancy": sr.meta.get("recursion_discrepancy"),
        "xbar0_closure": sr.meta.get("xbar0_closure"),
        "balance_residual": balance_residual(k, sr, min(sr.K, 2000)),
    }
    return art, sr, rep


def cmd_validate(a) -> int:
    try:
        k = read_kernel(a.kernel)
        bad = validate_kernel(k)
    except KernelError as e:
        bad = e.violations
    if bad:
        _emit({"command": "validate", "valid": False, "violations": bad}, a.out)
        return 1
    _emit({"command": "validate", "valid": True, "audit": audit_regime(k).to_dict()}, a.out)
    return 0


def cmd_solve(a) -> int:
    k = read_kernel(a.kernel)
    art, sr, rep = _solve_report(k, a)
    if a.out is not None:
        a.out.mkdir(parents=True, exist_ok=True)
        sr.to_csv(a.out / "stationary.csv")
    _emit({"command": "solve", "audit": audit_regime(k).to_dict(), **rep}, a.out)
    return 0


def _asymptotics(k, a, command, extra=None) -> int:
    art, sr, rep = _solve_report(k, a)
    top = min(sr.K, sr.meta.get("trusted_K", sr.K))
    grid = log_grid(1, top) if top >= 10 else None
    ar = analyze(k, art, sr, a.theorem, k_grid=grid)
    if a.out is not None:
        a.out.mkdir(parents=True, exist_ok=True)
        sr.to_csv(a.out / "stationary.csv")
        if ar.empirical_ratios is not None:
            ar.empirical_ratios.to_csv(a.out / "ratios.csv", ar.prefactor)
    _emit({"command": command, **(extra or {}), "solve": rep, **ar.to_dict()}, a.out)
    return 0


def cmd_asymptotics(a) -> int:
    return _asymptotics(read_kernel(a.kernel), a, "asymptotics")


def cmd_period(a) -> int:
    k = read_kernel(a.kernel)
    info = detect_period(k)
    checks = {str(n): spectral_period_check(k, n) for n in range(1, 2 * k.M + 1)}
    _emit({"command": "period", **info.to_dict(), "spectral_check": checks}, a.out)
    return 0


def cmd_oracle(a) -> int:
    k = read_kernel(a.kernel)
    notes = []
    N = a.levels
    if N is None:
        N = 4 * a.kmax
        cap = (ORACLE_MAX_STATES - k.M0) // k.M
        if N > cap:
            notes.append(f"levels capped at {cap} by the dense-matrix limit")
            N = cap
    orc = oracle_solve(k, N)
    prev = None if a.out is None else a.out / "stationary.csv"
    if prev is not None and prev.exists():
        ma = read_stationary_csv(prev)
        notes.append("compared against stationary.csv from a previous solve")
    else:
        _, ma, _ = _solve_report(k, a)
    K = min(N // 4, ma.K, orc.K)
    diff = compare(ma, orc, K)
    if a.out is not None:
        a.out.mkdir(parents=True, exist_ok=True)
        orc.to_csv(a.out / "oracle.csv")
        diff.to_csv(a.out / "diff.csv")
    _emit({"command": "oracle", "levels": N, "compared_up_to": K, "x0": orc.x0,
           "tail_mass_beyond_N": float(ma.xbar_seq[min(N, ma.K)].sum()) if ma.K >= 1 else None,
           "notes": notes, **diff.to_dict()}, a.out)
    return 0


def cmd_example(a) -> int:
    if a.name == "disaster":
        k = disaster_kernel(a.phi, a.q, a.gamma, a.kmax)
        params = {"phi": a.phi, "q": a.q, "gamma": a.gamma}
    else:
        k = mg1_pareto_kernel(a.lam, a.gamma, a.kmax)
        params = {"lambda": a.lam, "gamma": a.gamma}
    path = None
    if a.out is not None:
        a.out.mkdir(parents=True, exist_ok=True)
        path = a.out / f"{a.name}.json"
        write_kernel(k, path)
    extra = {"example": a.name, "params": params, "kernel_file": None if path is None else str(path)}
    return _asymptotics(k, a, "example", extra)


def cmd_diagnose_tail(a) -> int:
    params = {"gamma": a.gamma} if a.family == "pareto" else {"p": a.p}
    t = make_tail(a.family, params)
    top, notes = a.kmax_grid, []
    # light tails underflow long before the default grid ends
    while top > a.kmin and not (t.ccdf(top + 1) > 0 and t.pmf(top + 1) > 0):
        top //= 2
    if top != a.kmax_grid:
        notes.append(f"grid cut at {top}: probabilities underflow beyond")
    grid = log_grid(a.kmin, top, 5)
    d = class_diagnostics(t, grid, h=a.h)
    if a.out is not None:
        a.out.mkdir(parents=True, exist_ok=True)
        d.to_csv(a.out / "diagnostics.csv")
    _emit({"command": "diagnose-tail", "family": a.family, "params": params,
           "claimed_classes": sorted(t.claimed_classes), "mean": t.mean,
           "series": d.summary(), "notes": notes}, a.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--kmax", type=int, default=4096, help="horizon of L, F and x (default 4096)")
    common.add_argument("--tol", type=float, default=1e-12, help="Phi sweep tolerance (default 1e-12)")
    common.add_argument("--out", type=Path, default=None, help="output directory")

    p = _Parser(prog="gig1", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("validate", parents=[common], help="check a kernel file")
    s.add_argument("kernel")
    s.set_defaults(fn=cmd_validate)

    s = sub.add_parser("solve", parents=[common], help="stationary distribution")
    s.add_argument("kernel")
    s.set_defaults(fn=cmd_solve)

    s = sub.add_parser("asymptotics", parents=[common], help="tail prefactor and ratio series")
    s.add_argument("kernel")
    s.add_argument("--theorem", choices=THEOREMS + ("auto",), default="auto")
    s.set_defaults(fn=cmd_asymptotics)

    s = sub.add_parser("period", parents=[common], help="period of the additive component")
    s.add_argument("kernel")
    s.set_defaults(fn=cmd_period)

    s = sub.add_parser("oracle", parents=[common], help="truncated-chain check")
    s.add_argument("kernel")
    s.add_argument("--levels", type=int, default=None, help="level cap (default 4*kmax)")
    s.set_defaults(fn=cmd_oracle)

    s = sub.add_parser("example", parents=[common], help="shipped example studies")
    s.add_argument("name", choices=("disaster", "mg1"))
    s.add_argument("--phi", type=float, default=0.2)
    s.add_argument("--q", type=float, default=0.5)
    s.add_argument("--gamma", type=float, default=2.0)
    s.add_argument("--lam", type=float, default=0.5)
    s.add_argument("--theorem", choices=THEOREMS + ("auto",), default="auto")
    s.set_defaults(fn=cmd_example)

    s = sub.add_parser("diagnose-tail", parents=[common], help="heavy-tail class diagnostics")
    s.add_argument("--family", choices=("pareto", "geometric"), default="pareto")
    s.add_argument("--gamma", type=float, default=2.0)
    s.add_argument("--p", type=float, default=0.5)
    s.add_argument("--kmin", type=int, default=10)
    s.add_argument("--kmax-grid", type=int, default=10000)
    s.add_argument("--h", type=int, default=2)
    s.set_defaults(fn=cmd_diagnose_tail)
    return p


def run(argv=None) -> int:
    try:
        a = build_parser().parse_args(argv)
        with _threads():
            return a.fn(a)
    except NonConvergence as e:
        print(f"gig1: not converged: {e}", file=sys.stderr)
        return 2
    except KernelError as e:
        print("gig1: invalid kernel:", file=sys.stderr)
        for v in e.violations:
            print(f"  - {v}", file=sys.stderr)
        return 1
    except (UsageError, ValueError, OSError, MemoryError, json.JSONDecodeError) as e:
        print(f"gig1: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
