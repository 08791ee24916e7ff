"""Command-line experiment runner: single solves, refinement and parameter sweeps."""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import BasisMemoryExceeded, IclsError, ParseError, ShiftBudgetExceeded
from .io import ProblemSpec, RunRecord, history_rows, load_problem, write_history
from .krylov import StoppingConfig
from .pipeline import prepare, solve
from .refine import RefineConfig, lsqr_ir

FORMATS = ("fp16", "fp32", "fp64")
MARKS = {"max_iter": "†", "apply_breakdown": "‡", "memory": "∗"}


@dataclass(frozen=True)
class RunTask:
    """One fully specified run; a sweep plan is a list of these."""

    matrix: str
    rhs_seed: int = 0
    precond: str = "ic-mem"
    level: int = 0
    lsize: Optional[int] = None
    rsize: Optional[int] = None
    fact: str = "fp64"
    apply: str = "fp64"
    matvec: str = "fp64"
    stop: str = "pt"
    delta: float = 1e-10
    maxit: int = 3000
    reorth: str = "none"
    refine: bool = False
    delta2: float = 1e-8
    eta: float = 1e3 * 2.0 ** -53
    itmax_outer: int = 10
    max_basis_bytes: Optional[int] = None


def _record(task: RunTask, problem: str) -> RunRecord:
    return RunRecord(problem=problem, precond=task.precond,
                     level=task.level if task.precond == "ic-level" else None,
                     lsize=task.lsize if task.precond == "ic-mem" else None,
                     rsize=task.rsize if task.precond == "ic-mem" else None,
                     fact=task.fact, apply=task.apply, matvec=task.matvec, stop=task.stop,
                     delta=task.delta, reorth=task.reorth)


def execute(task: RunTask) -> Tuple[RunRecord, List[Dict], bool]:
    """Run one task; returns (record, history rows, fatal error flag)."""
    spec = ProblemSpec(task.matrix, rhs_seed=task.rhs_seed)
    rec = _record(task, spec.name)
    t0 = time.perf_counter()
    rows: List[Dict] = []
    try:
        A, b = load_problem(spec)
        rsize = task.lsize if task.rsize is None else task.rsize
        prep = prepare(A, "ic-mem" if task.refine else task.precond, task.fact, task.lsize, rsize,
                       task.level)
        if prep.factor is not None:
            rec.alpha, rec.restarts, rec.nz_l = prep.factor.alpha, prep.factor.restarts, prep.factor.nnz
            rec.lost_entries = prep.normal.lost_entries
        if task.refine:
            inner = StoppingConfig("pt", task.delta, max_iterations=task.maxit)
            cfg = RefineConfig(task.fact, task.apply, "fp64", task.itmax_outer, inner, task.delta2,
                               task.eta, reorth=task.reorth)
            _, rep = lsqr_ir(A, b, cfg, prepared=prep)
            rec.iterations, rec.termination = rep.nsol, rep.termination
            rec.nout, rec.nsol = rep.nout, rep.nsol
            rec.ratio_gs, rec.rnorm = rep.ratio_gs, rep.rnorm
        else:
            cfg = StoppingConfig(task.stop, task.delta, max_iterations=task.maxit)
            _, rep = solve(prep, b, cfg, task.apply, task.matvec, task.reorth,
                           max_basis_bytes=task.max_basis_bytes)
            rec.iterations, rec.termination = rep.iterations, rep.termination
            rec.ratio_pt, rec.ratio_gs, rec.ratio_ps = rep.ratio_pt, rep.ratio_gs, rep.ratio_ps
            rec.rnorm = rep.rnorm
            rows = history_rows(rep)
        fatal = False
    except BasisMemoryExceeded as exc:
        rec.termination, rec.error, fatal = "memory", str(exc), False
    except (ParseError, ShiftBudgetExceeded, IclsError, OSError, ValueError) as exc:
        rec.termination, rec.error, fatal = "error", f"{type(exc).__name__}: {exc}", True
    rec.wall_time = time.perf_counter() - t0
    return rec, rows, fatal


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("ICLS_THREADS", "1")))
    except ValueError:
        return 1


def run_plan(plan: Sequence[RunTask]):
    """Execute every task, in parallel across runs when ``ICLS_THREADS`` > 1."""
    workers = min(thread_cap(), len(plan))
    if workers <= 1:
        return [execute(t) for t in plan]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(execute, plan))


# --------------------------------------------------------------------------
# tables

def _fmt(v, spec=".2e") -> str:
    if v is None:
        return "-"
    return format(v, spec) if isinstance(v, float) else str(v)


def outcome(rec: RunRecord) -> str:
    """Iteration count, or the table marker for a run that did not converge."""
    if rec.termination == "error":
        return "error"
    mark = MARKS.get(rec.termination, "")
    return mark if mark in (MARKS["apply_breakdown"], MARKS["memory"]) else f"{rec.iterations}{mark}"


def render(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(str(h)), *(len(str(r[k])) for r in rows)) if rows else len(str(h))
              for k, h in enumerate(headers)]
    line = lambda cells: "  ".join(str(c).rjust(w) for c, w in zip(cells, widths))
    return "\n".join([line(headers), line(["-" * w for w in widths])] + [line(r) for r in rows])


def table_runs(records: Sequence[RunRecord]) -> str:
    heads = ["Identifier", "precond", "fact", "apply", "matvec", "stop", "delta", "nz(L)", "alpha",
             "iters", "termination", "ratio_PT", "ratio_GS", "time(s)"]
    rows = [[r.problem, r.precond, r.fact, r.apply, r.matvec, r.stop, _fmt(r.delta), r.nz_l,
             _fmt(r.alpha), outcome(r), r.termination, _fmt(r.ratio_pt), _fmt(r.ratio_gs),
             _fmt(r.wall_time, ".3f")] for r in records]
    return render(heads, rows)


def table_refine(records: Sequence[RunRecord]) -> str:
    heads = ["Identifier", "fact", "working", "nz(L)", "nout", "nsol", "termination", "ratio_GS"]
    rows = [[r.problem, r.fact, r.apply, r.nz_l, _fmt(r.nout), _fmt(r.nsol), r.termination,
             _fmt(r.ratio_gs)] for r in records]
    return render(heads, rows)


def table_sweep(records: Sequence[RunRecord], key: str, facts: Sequence[str]) -> str:
    """One row per (problem, parameter value), one iteration column per format."""
    grouped: Dict[Tuple[str, object], Dict[str, RunRecord]] = {}
    for r in records:
        grouped.setdefault((r.problem, getattr(r, key)), {})[r.fact] = r
    heads = ["Identifier", key, "nz(L)"] + list(facts)
    rows = []
    for (prob, val), by_fact in grouped.items():
        first = by_fact[next(iter(by_fact))]
        rows.append([prob, val, first.nz_l] + [outcome(by_fact[f]) if f in by_fact else "-" for f in facts])
    return render(heads, rows)


def table_stop(records: Sequence[RunRecord]) -> str:
    heads = ["Identifier", "criterion", "delta", "iters", "ratio_GS", "ratio_PS", "ratio_PT"]
    rows = [[r.problem, r.stop.upper(), _fmt(r.delta), outcome(r), _fmt(r.ratio_gs),
             _fmt(r.ratio_ps), _fmt(r.ratio_pt)] for r in records]
    return render(heads, rows)


# --------------------------------------------------------------------------
# argument parsing

def _common(p: argparse.ArgumentParser, multi_fact: bool = False) -> None:
    p.add_argument("--matrix", required=True, nargs="+", metavar="PATH", help="Matrix Market file(s)")
    p.add_argument("--rhs-seed", type=int, default=0, metavar="N")
    p.add_argument("--precond", choices=("none", "ic-level", "ic-mem"), default="ic-mem")
    p.add_argument("--level", type=int, default=0, metavar="N")
    p.add_argument("--lsize", type=int, default=None, metavar="N", help="default: no memory limit")
    p.add_argument("--rsize", type=int, default=None, metavar="N", help="default: equal to --lsize")
    if multi_fact:
        p.add_argument("--fact", choices=FORMATS, nargs="+", default=["fp64"])
    else:
        p.add_argument("--fact", choices=FORMATS, default="fp64")
    p.add_argument("--apply", choices=FORMATS, default="fp64")
    p.add_argument("--matvec", choices=FORMATS, default="fp64")
    p.add_argument("--stop", choices=("gs", "ps", "pt"), default="pt")
    p.add_argument("--delta", type=float, default=1e-10, metavar="X")
    p.add_argument("--maxit", type=int, default=3000, metavar="N")
    p.add_argument("--reorth", default="none", metavar="{none,full,one-sided,partial:K}")
    p.add_argument("--max-basis-mb", type=float, default=None, metavar="X",
                   help="memory cap for stored bases under reorthogonalization")
    p.add_argument("--out", default=None, metavar="PATH", help="directory for histories and summary")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icls", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("solve", help="preconditioned LSQR on each matrix"))
    p = sub.add_parser("refine", help="LSQR-IR with a low-precision factor")
    _common(p)
    p.add_argument("--delta2", type=float, default=1e-8, metavar="X")
    p.add_argument("--eta", type=float, default=1e3 * 2.0 ** -53, metavar="X")
    p.add_argument("--itmax-outer", type=int, default=10, metavar="N")
    p.set_defaults(delta=1e-5, fact="fp32")
    p = sub.add_parser("sweep-lsize", help="iterations against lsize, per factorization format")
    _common(p, multi_fact=True)
    p.add_argument("--from", dest="start", type=int, default=5, metavar="N")
    p.add_argument("--to", dest="stop_at", type=int, default=60, metavar="N")
    p.add_argument("--step", type=int, default=5, metavar="N")
    p = sub.add_parser("sweep-level", help="iterations against the IC(level) fill level")
    _common(p, multi_fact=True)
    p.add_argument("--from", dest="start", type=int, default=0, metavar="N")
    p.add_argument("--to", dest="stop_at", type=int, default=3, metavar="N")
    p = sub.add_parser("compare-stop", help="the three stopping criteria at one tolerance")
    _common(p)
    return parser


def _check_ranges(args) -> None:
    if args.lsize is not None and args.lsize < 1:
        raise ValueError("--lsize must be >= 1")
    if args.rsize is not None and args.rsize < 0:
        raise ValueError("--rsize must be >= 0")
    if args.level < 0 or args.maxit < 1 or not args.delta > 0:
        raise ValueError("need --level >= 0, --maxit >= 1 and --delta > 0")
    if args.command == "sweep-lsize" and (args.start < 1 or args.step < 1):
        raise ValueError("sweep-lsize needs --from >= 1 and --step >= 1")
    if args.command == "sweep-level" and args.start < 0:
        raise ValueError("sweep-level needs --from >= 0")
    if args.command == "refine":
        RefineConfig(args.fact, args.apply, "fp64", args.itmax_outer, delta2=args.delta2, eta=args.eta)


def make_plan(args) -> List[RunTask]:
    _check_ranges(args)
    if args.reorth:
        from .krylov import ReorthPolicy
        ReorthPolicy.parse(args.reorth)
    base = dict(rhs_seed=args.rhs_seed, precond=args.precond, level=args.level, lsize=args.lsize,
                rsize=args.rsize, apply=args.apply, matvec=args.matvec, stop=args.stop,
                delta=args.delta, maxit=args.maxit, reorth=args.reorth,
                max_basis_bytes=None if args.max_basis_mb is None else int(args.max_basis_mb * 2 ** 20))
    plan: List[RunTask] = []
    for path in args.matrix:
        if args.command in ("solve", "compare-stop"):
            task = RunTask(path, fact=args.fact, **base)
            plan += ([replace(task, stop=s) for s in ("gs", "ps", "pt")]
                     if args.command == "compare-stop" else [task])
        elif args.command == "refine":
            plan.append(RunTask(path, fact=args.fact, refine=True, delta2=args.delta2, eta=args.eta,
                                itmax_outer=args.itmax_outer, **base))
        elif args.command == "sweep-lsize":
            for ls in range(args.start, args.stop_at + 1, args.step):
                for f in args.fact:
                    plan.append(RunTask(path, fact=f, **{**base, "precond": "ic-mem", "lsize": ls,
                                                         "rsize": ls if args.rsize is None else args.rsize}))
        elif args.command == "sweep-level":
            for lev in range(args.start, args.stop_at + 1):
                for f in args.fact:
                    plan.append(RunTask(path, fact=f, **{**base, "precond": "ic-level", "level": lev}))
    return plan


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        plan = make_plan(args)
    except ValueError as exc:
        parser.error(str(exc))
    results = run_plan(plan)
    records = [r for r, _, _ in results]
    if args.command == "refine":
        print(table_refine(records))
    elif args.command == "sweep-lsize":
        print(table_sweep(records, "lsize", args.fact))
    elif args.command == "sweep-level":
        print(table_sweep(records, "level", args.fact))
    elif args.command == "compare-stop":
        print(table_stop(records))
    else:
        print(table_runs(records))
    for r in records:
        if r.error:
            print(f"{r.problem}: {r.error}", file=sys.stderr)
    if args.out:
        write_history(records, [h for _, h, _ in results], args.out, args.format)
    return 1 if any(fatal for _, _, fatal in results) else 0


if __name__ == "__main__":
    sys.exit(main())
