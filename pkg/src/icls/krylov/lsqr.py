"""Right-preconditioned LSQR with selectable stopping rule and precisions.

Products with ``B`` run in ``matvec_format``, preconditioner applications in
the preconditioner's format; all recurrence scalars and the stopping
arithmetic are fp64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from ..errors import ApplyBreakdown
from ..precision import FP64, FpFormat, get_format
from ..sparsela import SparseMatrix, matvec, matvec_t
from .preconditioner import IdentityPreconditioner, Preconditioner
from .reorth import Basis, ReorthPolicy, reorthogonalize
from .stopping import AdaptiveEstimator, estimate_norm2, ratio_gs, ratio_ps, ratio_pt

TERMINATIONS = ("converged", "max_iter", "stagnation", "lucky_breakdown", "apply_breakdown")


@dataclass(frozen=True)
class StoppingConfig:
    """Which test stops LSQR, and its tolerances.

    ``criterion`` is ``"pt"`` (error estimate), ``"gs"`` (explicit gradient
    ratio, optionally with ``delta1`` on ``||r||`` for consistent systems) or
    ``"ps"`` (recurrence estimates; ``delta_b`` enables the consistent-system
    branch). ``check_period`` thins out the costly ``gs`` checks.
    """

    criterion: str = "pt"
    delta: float = 1e-10
    delta1: Optional[float] = None
    delta_b: Optional[float] = None
    max_iterations: int = 3000
    check_period: int = 1
    tau: float = 0.25
    tol: float = 1e-4
    sqrt_estimate: bool = True
    stagnation_window: int = 10

    def __post_init__(self):
        if self.criterion not in ("pt", "gs", "ps"):
            raise ValueError(f"unknown stopping criterion {self.criterion!r}")
        if self.delta <= 0 or self.max_iterations < 1 or self.check_period < 1:
            raise ValueError("tolerances and iteration limits must be positive")


@dataclass
class IterRecord:
    iter: int
    phibar: float
    est_norm_ar: float
    ratio_pt: float
    ratio_ps: float
    ratio_gs: Optional[float] = None
    ell: int = 0
    estim: float = math.inf


@dataclass
class SolveReport:
    """Outcome of one LSQR run.

    ``y`` is ``M^{-1} z``, the solution of the (column-scaled) problem handed
    to :func:`lsqr`; ``x = S y`` recovers the unscaled solution. ``matvecs``
    counts products with ``B`` made by the recurrence (diagnostics excluded).
    """

    iterations: int
    termination: str
    history: List[IterRecord]
    y: np.ndarray
    rnorm: float
    arnorm: float
    norm_a2: float
    norm_af: float
    ratio_pt: float
    ratio_gs: float
    ratio_ps: float
    estimate_index: int = 0
    matvecs: int = 0
    iterates: Optional[List[np.ndarray]] = field(default=None, repr=False)

    @property
    def converged(self) -> bool:
        return self.termination in ("converged", "lucky_breakdown")


def lsqr(B: SparseMatrix, b, M: Optional[Preconditioner] = None,
         cfg: StoppingConfig = StoppingConfig(), reorth: Union[str, ReorthPolicy] = "none",
         matvec_format: Union[str, FpFormat] = FP64, norm_a2: Optional[float] = None,
         record_gs: bool = False, keep_iterates: bool = False,
         max_basis_bytes: Optional[int] = None):
    """Solve ``min ||b - B M^{-1} z||`` and return ``(z, SolveReport)``.

    ``norm_a2`` is the 2-norm estimate used by the ``pt`` test; it is computed
    by power iteration on ``B`` when not supplied. With ``record_gs`` the
    explicit gradient ratio is stored in the history at every iteration
    (one extra product pair each).
    """
    M = M or IdentityPreconditioner()
    policy = ReorthPolicy.parse(reorth) if isinstance(reorth, str) else reorth
    fmv = get_format(matvec_format)
    b = np.asarray(b, dtype=np.float64)
    m, n = B.shape
    norm_b = float(np.linalg.norm(b))
    if norm_a2 is None:
        norm_a2 = estimate_norm2(B)

    z = np.zeros(n)
    y = np.zeros(n)
    history: List[IterRecord] = []
    iterates = [] if keep_iterates else None
    est = AdaptiveEstimator(cfg.tau, cfg.tol)
    gs_base = ratio_gs(B, b, b) if norm_b else 0.0

    def finish(iters, how, ratio_pt_val=math.inf, ratio_ps_val=math.inf):
        r = b - B.to_scipy() @ y
        rn = float(np.linalg.norm(r))
        arn = float(np.linalg.norm(B.to_scipy().T @ r))
        gs = ratio_gs(B, r, b) if norm_b else 0.0
        return z, SolveReport(iters, how, history, y, rn, arn, norm_a2, math.sqrt(frob2),
                              ratio_pt_val, gs, ratio_ps_val, est.iterate_index, n_fwd, iterates)

    frob2 = 0.0
    n_fwd = 0
    beta = norm_b
    if beta == 0:
        return finish(0, "lucky_breakdown", 0.0, 0.0)
    q = b / beta
    # a vector cancelled to roundoff is treated as zero (lucky breakdown)
    noise = 10 * np.finfo(np.float64).eps
    btq = matvec_t(B, q, fmv)
    try:
        t = M.apply_inv_t(btq)
    except ApplyBreakdown:
        return finish(0, "apply_breakdown")
    mu = float(np.linalg.norm(t))
    frob2 = mu * mu
    if mu == 0 or np.linalg.norm(btq) <= noise * norm_a2:
        return finish(0, "lucky_breakdown", 0.0, 0.0)
    p = t / mu
    w = p.copy()
    Mw = None
    coef = 0.0
    rhobar, phibar = mu, beta

    Q = Basis(m, max_basis_bytes) if policy.on_q else None
    P = Basis(n, max_basis_bytes) if policy.on_p else None
    if Q is not None:
        Q.append(q)
    if P is not None:
        P.append(p)
    depth = policy.depth

    best_gs, since_best, last_rn = math.inf, 0, None
    pt = ps = math.inf
    for i in range(1, cfg.max_iterations + 1):
        # bidiagonalization
        try:
            u = M.apply_inv(p)
        except ApplyBreakdown:
            return finish(i - 1, "apply_breakdown", pt, ps)
        bu = matvec(B, u, fmv)
        v = bu - mu * q
        n_fwd += 1
        lucky = False
        if Q is not None:
            v, beta, flag = reorthogonalize(Q.last(depth), v)
            lucky |= flag
        else:
            beta = float(np.linalg.norm(v))
            v = v / beta if beta > 0 else v
        if beta <= noise * (np.linalg.norm(bu) + mu):
            beta, lucky = 0.0, True
        q = v if beta > 0 else np.zeros(m)
        btq = matvec_t(B, q, fmv)
        try:
            mtq = M.apply_inv_t(btq)
        except ApplyBreakdown:
            return finish(i - 1, "apply_breakdown", pt, ps)
        t = mtq - beta * p
        if P is not None:
            t, mu_new, flag = reorthogonalize(P.last(depth), t)
            lucky |= flag and beta > 0
        else:
            mu_new = float(np.linalg.norm(t))
            t = t / mu_new if mu_new > 0 else t
        if beta > 0 and (mu_new <= noise * (np.linalg.norm(mtq) + beta)
                         or np.linalg.norm(btq) <= noise * norm_a2):
            mu_new, lucky = 0.0, True
        p_new = t if mu_new > 0 else np.zeros(n)
        lucky |= beta == 0 or mu_new == 0
        frob2 += beta * beta + mu_new * mu_new

        # QR update of the bidiagonal
        rho = math.hypot(rhobar, beta)
        c, s = rhobar / rho, beta / rho
        gamma = s * mu_new
        rhobar_new = -c * mu_new
        phi = c * phibar
        phibar_new = s * phibar

        # iterates: w and its preconditioned image M^{-1} w
        Mw = u.copy() if Mw is None else u - coef * Mw
        step = phi / rho
        z += step * w
        y += step * Mw
        coef = gamma / rho
        w = p_new - coef * w
        if keep_iterates:
            iterates.append(y.copy())

        ell, estim = est.update(phi)
        norm_ar = phibar_new * mu_new * abs(c)
        ps = ratio_ps(norm_ar, math.sqrt(frob2), phibar_new)
        pt = ratio_pt(estim, norm_a2, float(np.linalg.norm(y)), norm_b, cfg.sqrt_estimate)
        rec = IterRecord(i, phibar_new, norm_ar, pt, ps, None, ell, estim)
        need_gs = record_gs or (cfg.criterion == "gs" and i % cfg.check_period == 0)
        rn_true = None
        if need_gs:
            r = b - B.to_scipy() @ y
            rn_true = float(np.linalg.norm(r))
            rec.ratio_gs = ratio_gs(B, r, b) if gs_base else 0.0
        history.append(rec)

        rhobar, phibar, mu, p = rhobar_new, phibar_new, mu_new, p_new
        if Q is not None:
            Q.append(q)
        if P is not None:
            P.append(p)

        if lucky:
            # the bidiagonalization has terminated: every later Delta is zero,
            # so the error of the current iterate is exactly zero
            est.ell, est.estim = i + 1, 0.0
            rec.ell, rec.estim, rec.ratio_pt = i + 1, 0.0, 0.0
            return finish(i, "lucky_breakdown", 0.0, ps)
        if cfg.criterion == "pt" and pt < cfg.delta:
            return finish(i, "converged", pt, ps)
        if cfg.criterion == "ps":
            consistent = (cfg.delta_b is not None and
                          phibar_new <= cfg.delta * math.sqrt(frob2) * np.linalg.norm(y)
                          + cfg.delta_b * norm_b)
            if ps <= cfg.delta or consistent:
                return finish(i, "converged", pt, ps)
        if cfg.criterion == "gs" and rec.ratio_gs is not None:
            if rec.ratio_gs < cfg.delta or (cfg.delta1 is not None and rn_true < cfg.delta1):
                return finish(i, "converged", pt, ps)
            if rec.ratio_gs < best_gs * (1 - 1e-3):
                best_gs, since_best = rec.ratio_gs, 0
            else:
                since_best += 1
            flat_r = last_rn is not None and abs(last_rn - rn_true) <= 10 * np.finfo(float).eps * rn_true
            last_rn = rn_true
            if since_best >= cfg.stagnation_window and flat_r:
                return finish(i, "stagnation", pt, ps)
    return finish(cfg.max_iterations, "max_iter", pt, ps)
