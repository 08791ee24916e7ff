"""Scale, squeeze, factor, and solve: the end-to-end preconditioned LSQR path."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Union


from .icfact import ICFactor, MemLimits, ShiftPolicy, ic_level, ic_memory_limited
from .krylov import ICPreconditioner, IdentityPreconditioner, StoppingConfig, estimate_norm2, lsqr
from .precision import FP64, ConversionAudit, FpFormat, get_format
from .sparsela import NormalMatrix, ScaledProblem, SparseMatrix, form_normal, scale_columns, squeeze_matrix

PRECONDITIONERS = ("none", "ic-level", "ic-mem")


@dataclass
class Prepared:
    """Column-scaled problem plus (optionally) its incomplete factor."""

    problem: ScaledProblem
    precond: str
    fact_format: FpFormat
    squeeze_audit: Optional[ConversionAudit] = None
    normal: Optional[NormalMatrix] = None
    factor: Optional[ICFactor] = None
    norm_a2: float = 0.0
    setup_time: float = 0.0


def prepare(A: SparseMatrix, precond: str = "ic-mem", fact: Union[str, FpFormat] = FP64,
            lsize: Optional[int] = None, rsize: Optional[int] = None, level: int = 0,
            shifts: Optional[ShiftPolicy] = None) -> Prepared:
    """Scale ``A``, squeeze it to ``fact``, form ``C = B^T B`` there and factor it.

    ``lsize=None`` means no memory limit (the complete factor when nothing is
    dropped). ``rsize`` defaults to ``lsize``.
    """
    if precond not in PRECONDITIONERS:
        raise ValueError(f"unknown preconditioner {precond!r}")
    fmt = get_format(fact)
    t0 = time.perf_counter()
    problem = scale_columns(A)
    prep = Prepared(problem, precond, fmt, norm_a2=estimate_norm2(problem.B))
    if precond != "none":
        B_l, audit = squeeze_matrix(problem.B, fmt)
        C = form_normal(B_l, fmt)
        if precond == "ic-mem":
            n = A.ncols
            limits = (MemLimits.unlimited(n) if lsize is None
                      else MemLimits(lsize, lsize if rsize is None else rsize))
            factor = ic_memory_limited(C, limits, fmt, shifts)
        else:
            factor = ic_level(C, level, fmt, shifts)
        prep.squeeze_audit, prep.normal, prep.factor = audit, C, factor
    prep.setup_time = time.perf_counter() - t0
    return prep


def make_preconditioner(prep: Prepared, apply: Union[str, FpFormat] = FP64):
    if prep.factor is None:
        return IdentityPreconditioner(apply)
    return ICPreconditioner(prep.factor, apply)


def solve(prep: Prepared, b, cfg: StoppingConfig = StoppingConfig(), apply: Union[str, FpFormat] = FP64,
          matvec: Union[str, FpFormat] = FP64, reorth="none", record_gs: bool = False,
          max_basis_bytes: Optional[int] = None):
    """Run preconditioned LSQR on a prepared problem; returns ``(x, report)``."""
    M = make_preconditioner(prep, apply)
    _, report = lsqr(prep.problem.B, b, M, cfg, reorth, matvec, prep.norm_a2, record_gs,
                     max_basis_bytes=max_basis_bytes)
    return prep.problem.S * report.y, report
