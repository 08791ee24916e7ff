"""LSQR-IR: iterative refinement of least-squares solutions in three precisions.

The factor lives in ``fact_format``, corrections are solved and the solution
updated in ``working_format``, and residuals are formed in
``residual_format`` (the most accurate of the three).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from .errors import ApplyBreakdown
from .icfact import MemLimits, ShiftPolicy
from .krylov import StoppingConfig, lsqr, ratio_gs
from .pipeline import Prepared, make_preconditioner, prepare
from .precision import FP32, FP64, FpFormat, get_format, round_to
from .sparsela import SparseMatrix, matvec, solve_lower, solve_upper_t

FormatLike = Union[str, FpFormat]


@dataclass(frozen=True)
class RefineConfig:
    fact_format: FormatLike = FP32
    working_format: FormatLike = FP64
    residual_format: FormatLike = FP64
    itmax: int = 10
    inner: StoppingConfig = StoppingConfig("pt", 1e-5)
    delta2: float = 1e-8
    eta: float = 1e3 * 2.0 ** -53
    initial_solve: bool = False
    reorth: str = "none"

    def __post_init__(self):
        ul, uw, ur = (get_format(f).unit_roundoff for f in
                      (self.fact_format, self.working_format, self.residual_format))
        if not ul >= uw >= ur:
            raise ValueError("precisions must satisfy u_fact >= u_working >= u_residual")
        if self.delta2 <= 0 or self.eta < 0 or self.itmax < 1:
            raise ValueError("delta2 must be positive, eta nonnegative and itmax >= 1")


@dataclass
class OuterRecord:
    inner_iterations: int
    inner_termination: str
    ratio_gs: float
    rnorm: float


@dataclass
class RefineReport:
    """``nsol`` counts solves with L and L^T; ``matvecs`` forward products with A."""

    nout: int = 0
    nsol: int = 0
    matvecs: int = 0
    termination: str = "itmax"
    outer: List[OuterRecord] = field(default_factory=list)
    ratio_gs: float = np.inf
    rnorm: float = np.inf
    alpha: float = 0.0
    nz_l: int = 0

    @property
    def converged(self) -> bool:
        return self.termination in ("converged_gs", "stagnated")


def lsqr_ir(A: SparseMatrix, b, cfg: RefineConfig = RefineConfig(), limits: Optional[MemLimits] = None,
            shifts: Optional[ShiftPolicy] = None, prepared: Optional[Prepared] = None):
    """Refine ``min ||b - A x||`` with corrections from preconditioned LSQR.

    ``limits=None`` factors without a memory limit. A ready ``prepared``
    problem (same ``A``) may be passed to reuse its factor. Returns
    ``(x, RefineReport)``.
    """
    uw = get_format(cfg.working_format)
    ur = get_format(cfg.residual_format)
    b = np.asarray(b, dtype=np.float64)
    if prepared is None:
        lsize = None if limits is None else limits.lsize
        rsize = None if limits is None else limits.rsize
        prepared = prepare(A, "ic-mem", cfg.fact_format, lsize, rsize, shifts=shifts)
    B, S = prepared.problem.B, prepared.problem.S
    M = make_preconditioner(prepared, uw)
    rep = RefineReport(alpha=prepared.factor.alpha if prepared.factor else 0.0,
                       nz_l=prepared.factor.nnz if prepared.factor else 0)

    def residual(x):
        rep.matvecs += 1
        r = round_to(ur, b - matvec(A, x))
        return round_to(uw, r)

    x = np.zeros(A.ncols)
    unlimited = limits is None or limits.lsize >= A.ncols - 1
    if cfg.initial_solve and unlimited and prepared.factor is not None:
        # warm start from L L^T y = B^T b, counted as one solve
        L = prepared.factor.L
        rhs = round_to(uw, B.to_scipy().T @ b)
        y = solve_upper_t(L, solve_lower(L, rhs, uw), uw)
        x = round_to(uw, S * y)
        rep.nsol += 1
        r = residual(x)
    else:
        r = round_to(uw, b)
    rnorm = float(np.linalg.norm(r))

    for _ in range(cfg.itmax):
        _, inner = lsqr(B, r, M, cfg.inner, cfg.reorth, uw, prepared.norm_a2)
        if inner.termination == "apply_breakdown":
            raise ApplyBreakdown(-1)
        rep.nsol += inner.iterations
        rep.matvecs += inner.matvecs
        x_new = round_to(uw, x + round_to(uw, S * inner.y))
        r_new = residual(x_new)
        rn_new = float(np.linalg.norm(r_new))
        gs = ratio_gs(A, r_new, b)
        rep.nout += 1
        rep.outer.append(OuterRecord(inner.iterations, inner.termination, gs, rn_new))
        if gs < cfg.delta2:
            x, rnorm, rep.termination = x_new, rn_new, "converged_gs"
            break
        if rn_new > rnorm:
            rep.termination = "residual_increase"
            break
        if (rnorm - rn_new) / rn_new <= cfg.eta:
            x, rnorm, rep.termination = x_new, rn_new, "stagnated"
            break
        x, r, rnorm = x_new, r_new, rn_new
    rep.rnorm = rnorm
    rep.ratio_gs = ratio_gs(A, b - A.to_scipy() @ x, b)
    return x, rep
