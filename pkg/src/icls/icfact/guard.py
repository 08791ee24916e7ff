"""Breakdown avoidance for incomplete Cholesky: shifts, row maxima, B3 test.

Breakdown kinds:

* ``B1`` -- a pivot is nonpositive or too small to take a square root of;
* ``B2`` -- scaling a column by its pivot overflows;
* ``B3`` -- an update ``w_i - a*b`` overflows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ShiftBudgetExceeded
from ..precision import FpFormat


@dataclass(frozen=True)
class ShiftPolicy:
    """Global shift schedule: ``alpha0 = initial_factor * max diag``, then growth.

    The factorization restarts from column 1 on ``C + alpha I`` after every
    breakdown; a shift larger than ``cap_factor * max diag`` is refused.
    """

    initial_factor: float = 1e-3
    growth: float = 2.0
    cap_factor: float = 1.0
    max_restarts: Optional[int] = None


@dataclass(frozen=True)
class BreakdownEvent:
    column: int
    kind: str
    action: str
    alpha: float


@dataclass(frozen=True)
class MemLimits:
    """Per-column caps for the memory-limited factorization.

    ``lsize`` counts off-diagonal entries kept in L; the pivot is always kept.
    """

    lsize: int
    rsize: int = 0

    def __post_init__(self):
        if self.lsize < 1 or self.rsize < 0:
            raise ValueError("need lsize >= 1 and rsize >= 0")

    @classmethod
    def unlimited(cls, n: int) -> "MemLimits":
        return cls(max(n - 1, 1), 0)


def next_shift(policy: ShiftPolicy, alpha: float, diag_max: float) -> float:
    """Shift to restart with after a breakdown at shift ``alpha``."""
    new = policy.initial_factor * diag_max if alpha == 0 else policy.growth * alpha
    cap = policy.cap_factor * diag_max
    if new > cap or not np.isfinite(new) or new <= 0:
        raise ShiftBudgetExceeded(new, cap)
    return new


class RowMax:
    """Running per-row maxima and entry counts of the computed factor columns.

    ``mu[i]`` is the largest magnitude among the stored entries of row ``i``
    of ``L + R`` in the columns finalized so far; ``lcount``/``rcount`` count
    how many of those entries sit in ``L``/``R``.
    """

    def __init__(self, n: int):
        self.mu = np.zeros(n)
        self.lcount = np.zeros(n, dtype=np.int64)
        self.rcount = np.zeros(n, dtype=np.int64)

    def add_column(self, l_rows, l_vals, r_rows, r_vals) -> None:
        if len(l_rows):
            np.maximum.at(self.mu, l_rows, np.abs(l_vals))
            self.lcount[l_rows] += 1
        if len(r_rows):
            np.maximum.at(self.mu, r_rows, np.abs(r_vals))
            self.rcount[r_rows] += 1


def b3_bound(j: int, cmax_j: float, rowmax: RowMax) -> float:
    """Worst-case magnitude any entry of column ``j`` can reach while updated.

    Every update product is bounded by ``mu_i * mu_j``; entry ``i`` receives
    at most ``min(l_j, l_i + r_i)`` updates from L-columns and
    ``min(r_j, l_i)`` from R-columns.
    """
    mu_tail = rowmax.mu[j:]
    l_tail = rowmax.lcount[j:]
    lr_tail = l_tail + rowmax.rcount[j:]
    n_updates = (min(int(rowmax.lcount[j]), int(lr_tail.max()))
                 + min(int(rowmax.rcount[j]), int(l_tail.max())))
    return cmax_j + float(mu_tail.max()) * float(rowmax.mu[j]) * n_updates


def b3_safe(j: int, cmax_j: float, rowmax: RowMax, fmt: FpFormat) -> bool:
    """True when no update of column ``j`` can overflow in ``fmt``."""
    return b3_bound(j, cmax_j, rowmax) <= fmt.x_max
