"""Stopping quantities for LSQR and the adaptive error estimator.

* ``ratio_gs`` -- normwise gradient ratio against the initial residual;
* ``ratio_ps`` -- the classic LSQR test from recurrence estimates;
* ``ratio_pt`` -- estimated ``A^T A``-norm error over ``||A|| ||x|| + ||b||``.

The error estimate comes from :class:`AdaptiveEstimator`: with
``Delta_k = phi_k**2``, the tail sum ``sum_{k>=l} Delta_k`` equals
``||x - x_{l-1}||^2_{A^T A}``; the estimator truncates that tail once the
terms still missing are provably (heuristically) below ``tau`` of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
import scipy.sparse.linalg as spla

from ..sparsela import SparseMatrix


@dataclass
class AdaptiveEstimator:
    """State of the adaptive error estimator across LSQR iterations.

    Indices are 1-based as in LSQR's iteration count; ``ell`` is the index of
    the oldest term of the current tail sum.
    """

    tau: float = 0.25
    tol: float = 1e-4
    deltas: List[float] = field(default_factory=list)
    ell: int = 1
    estim: float = math.inf

    @property
    def iterate_index(self) -> int:
        """Index of the LSQR iterate whose error ``estim`` bounds (0 = start)."""
        return self.ell - 1

    def update(self, phi: float) -> Tuple[int, float]:
        """Append ``phi_i`` and return ``(ell_i, estim_{ell_i})``.

        ``estim`` is ``inf`` while the rule has not yet produced an estimate
        for the current ``ell``.
        """
        self.deltas.append(float(phi) ** 2)
        i = len(self.deltas)
        if i < 2:
            return self.ell, math.inf
        D = np.asarray(self.deltas)
        # tail[j-1] = sum_{k=j..i} Delta_k; tail_prev[j-1] = sum_{k=j..i-1}
        tail = np.cumsum(D[::-1])[::-1]
        tail_prev = np.cumsum(D[-2::-1])[::-1]
        ell = self.ell
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = tail[ell - 1] / tail[: i - 1]
            ok = np.flatnonzero(ratios <= self.tol)
            p = int(ok[-1]) + 1 if ok.size else 1
            S = float(np.max(tail[p - 1: i - 1] / D[p - 1: i - 1]))
        d_i = D[i - 1]
        ell_i = ell
        fired = None
        while ell < i:
            denom = tail_prev[ell - 1]
            if not (denom > 0 and S * d_i / denom <= self.tau):
                break
            fired = (ell, float(tail[ell - 1]))
            ell += 1
        if fired is None:
            self.ell = ell_i
            self.estim = math.inf
            return self.ell, math.inf
        self.ell = max(ell_i, ell - 1)
        self.estim = fired[1]
        return self.ell, self.estim


def adaptive_estimate(est: AdaptiveEstimator, phi: float) -> Tuple[int, float]:
    """Functional spelling of :meth:`AdaptiveEstimator.update`."""
    return est.update(phi)


def _norm_ar_over_r(A, r: np.ndarray) -> float:
    M = A.to_scipy() if isinstance(A, SparseMatrix) else A
    nr = float(np.linalg.norm(r))
    if nr == 0:
        return 0.0
    return float(np.linalg.norm(M.T @ r)) / nr


def ratio_gs(A, r_i: np.ndarray, r_0: np.ndarray) -> float:
    """``(||A^T r_i|| / ||r_i||) / (||A^T r_0|| / ||r_0||)`` in fp64."""
    base = _norm_ar_over_r(A, r_0)
    if base == 0:
        return 0.0
    return _norm_ar_over_r(A, r_i) / base


def ratio_ps(norm_ar: float, norm_a: float, norm_r: float) -> float:
    denom = norm_a * norm_r
    return norm_ar / denom if denom > 0 else 0.0


def ratio_pt(estim: float, norm_a2: float, norm_x: float, norm_b: float,
             take_sqrt: bool = True) -> float:
    """Error-estimate stopping ratio; ``inf`` while no estimate exists.

    ``estim`` estimates a squared norm, so by default its square root is
    compared against the norm-valued denominator.
    """
    if not math.isfinite(estim):
        return math.inf
    num = math.sqrt(estim) if take_sqrt else estim
    return num / (norm_a2 * norm_x + norm_b)


def estimate_norm2(A, tol: float = 1e-4, maxit: int = 100, seed: int = 0) -> float:
    """Power iteration on ``A^T A``; returns a lower estimate of ``||A||_2``."""
    op = spla.aslinearoperator(A.to_scipy() if isinstance(A, SparseMatrix) else A)
    n = op.shape[1]
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(maxit):
        y = op.matvec(x)
        new = float(np.linalg.norm(y))
        if new == 0:
            return sigma
        z = op.rmatvec(y)
        nz = float(np.linalg.norm(z))
        if nz == 0:
            return new
        x = z / nz
        if abs(new - sigma) <= tol * new:
            return new
        sigma = new
    return sigma
