"""Left-looking incomplete Cholesky factorizations in emulated precision.

Both the memory-limited factorization (``lsize`` largest entries per column
kept in L, the next ``rsize`` in a temporary R whose R*R^T update is never
applied) and the level-based IC(l) run through one column engine. Every
elementary operation is rounded to the factorization format. Any breakdown
triggers a restart on ``C + alpha I`` with a larger global shift.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from ..errors import NotSymmetric, ShiftBudgetExceeded
from ..precision import FP64, FpFormat, get_format, round_to
from ..sparsela import NormalMatrix, SparseMatrix
from .guard import BreakdownEvent, MemLimits, RowMax, ShiftPolicy, b3_safe, next_shift
from .levels import LevelPattern, symbolic_levels


@dataclass(frozen=True)
class B3Check:
    column: int
    safe: bool
    overflowed: bool


@dataclass(frozen=True)
class ICFactor:
    """Incomplete factor ``L`` with ``C + alpha I ~ L L^T``.

    ``R`` and ``dropped`` are only populated when the factorization was run
    with ``keep_discarded=True``: ``R`` holds the scaled temporary entries and
    ``dropped`` the unscaled column values that went to neither factor.
    """

    L: SparseMatrix
    format: FpFormat
    alpha: float = 0.0
    restarts: int = 0
    breakdown_log: Tuple[BreakdownEvent, ...] = ()
    b3_checks: Tuple[B3Check, ...] = ()
    R: Optional[SparseMatrix] = None
    dropped: Optional[SparseMatrix] = None
    lookahead_diag: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.L.ncols

    @property
    def nnz(self) -> int:
        return self.L.nnz


class _Breakdown(Exception):
    def __init__(self, column: int, kind: str):
        super().__init__(f"{kind} breakdown at column {column}")
        self.column = column
        self.kind = kind


Selector = Callable[[int, np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


def _lower_part(C) -> SparseMatrix:
    if isinstance(C, NormalMatrix):
        return C.C
    if not isinstance(C, SparseMatrix):
        C = SparseMatrix.from_scipy(sp.csc_matrix(C))
    if C.nrows != C.ncols:
        raise NotSymmetric("matrix is not square")
    M = C.to_scipy()
    upper = sp.triu(M, 1)
    if upper.nnz == 0:
        return C
    if abs(M - M.T).max() != 0:
        raise NotSymmetric("matrix is not symmetric")
    return SparseMatrix.from_scipy(sp.tril(M))


def _memlimited_selector(limits: MemLimits) -> Selector:
    def select(j, rows, vals):
        # largest magnitude first, ties to the smaller row index
        order = np.lexsort((rows, -np.abs(vals)))
        return order[:limits.lsize], order[limits.lsize:limits.lsize + limits.rsize]
    return select


def _pattern_selector(pattern: LevelPattern) -> Selector:
    empty = np.zeros(0, dtype=np.int64)

    def select(j, rows, vals):
        return np.flatnonzero(np.isin(rows, pattern.pattern[j][1:])), empty
    return select


def _factor_once(C: SparseMatrix, fmt: FpFormat, alpha: float, select: Selector,
                 keep_discarded: bool, audit_b3: bool, checks: List["B3Check"]):
    n = C.ncols
    u = fmt.unit_roundoff
    cols = C.columns()
    diag = np.zeros(n)
    for j, (rows, vals) in enumerate(cols):
        hit = rows == j
        if hit.any():
            diag[j] = vals[hit][0]
    shifted = round_to(fmt, diag + alpha) if alpha else diag.copy()
    if not np.all(np.isfinite(shifted)):
        raise _Breakdown(int(np.flatnonzero(~np.isfinite(shifted))[0]), "B3")
    lookahead = shifted.copy()

    L_rows: List[np.ndarray] = []
    L_vals: List[np.ndarray] = []
    L_diag = np.zeros(n)
    R_rows: List[np.ndarray] = []
    R_vals: List[np.ndarray] = []
    L_by_row: List[List[Tuple[int, float]]] = [[] for _ in range(n)]
    R_by_row: List[List[Tuple[int, float]]] = [[] for _ in range(n)]
    rowmax = RowMax(n)
    dropped_cols: List[Tuple[np.ndarray, np.ndarray]] = []

    w = np.zeros(n)
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(n):
            rows_c, vals_c = cols[j]
            keep = rows_c >= j
            rows_c, vals_c = rows_c[keep], vals_c[keep]
            w[rows_c] = vals_c
            w[j] = shifted[j]
            touched = [rows_c, np.array([j])]
            cmax = float(np.max(np.abs(w[rows_c]), initial=abs(w[j])))
            safe = b3_safe(j, cmax, rowmax, fmt)
            guarded = audit_b3 or not safe
            overflowed = False

            def update(r, a, b):
                nonlocal overflowed
                if r.size == 0:
                    return
                w[r] = round_to(fmt, w[r] - round_to(fmt, a * b))
                touched.append(r)
                if guarded and not np.all(np.isfinite(w[r])):
                    overflowed = True

            for k, ljk in L_by_row[j]:
                lr, lv = L_rows[k], L_vals[k]
                s = np.searchsorted(lr, j)
                update(lr[s:], lv[s:], ljk)
                rr, rv = R_rows[k], R_vals[k]
                s = np.searchsorted(rr, j)
                update(rr[s:], rv[s:], ljk)
                if overflowed and not audit_b3:
                    break
            if not (overflowed and not audit_b3):
                for k, rjk in R_by_row[j]:
                    lr, lv = L_rows[k], L_vals[k]
                    s = np.searchsorted(lr, j)
                    update(lr[s:], lv[s:], rjk)
                    if overflowed and not audit_b3:
                        break

            idx = np.unique(np.concatenate(touched))
            if not guarded and not np.all(np.isfinite(w[idx])):
                overflowed = True
            checks.append(B3Check(j, safe, overflowed))
            if overflowed:
                w[idx] = 0.0
                raise _Breakdown(j, "B3")

            wj = w[j]
            if not wj > u * shifted[j] or not wj > 0:
                w[idx] = 0.0
                raise _Breakdown(j, "B1")
            off = idx[(idx > j)]
            off = off[w[off] != 0]
            vals = w[off].copy()
            w[idx] = 0.0

            li, ri = select(j, off, vals)
            pivot = round_to(fmt, np.sqrt(wj))
            l_sel = np.sort(li)
            r_sel = np.sort(ri)
            lv = round_to(fmt, vals[l_sel] / pivot)
            rv = round_to(fmt, vals[r_sel] / pivot)
            if not (np.all(np.isfinite(lv)) and np.all(np.isfinite(rv))):
                raise _Breakdown(j, "B2")
            lr, rr = off[l_sel], off[r_sel]
            nzl, nzr = lv != 0, rv != 0
            lr, lv, rr, rv = lr[nzl], lv[nzl], rr[nzr], rv[nzr]
            if keep_discarded:
                mask = np.ones(off.size, dtype=bool)
                mask[l_sel] = False
                mask[r_sel] = False
                dropped_cols.append((off[mask], vals[mask]))

            L_rows.append(lr)
            L_vals.append(lv)
            L_diag[j] = pivot
            R_rows.append(rr)
            R_vals.append(rv)
            for i, v in zip(lr.tolist(), lv.tolist()):
                L_by_row[i].append((j, v))
            for i, v in zip(rr.tolist(), rv.tolist()):
                R_by_row[i].append((j, v))
            rowmax.add_column(lr, lv, rr, rv)

            # look-ahead: pull the new column's squares off the remaining pivots
            if lr.size:
                lookahead[lr] = round_to(fmt, lookahead[lr] - round_to(fmt, lv * lv))
                bad = ~(lookahead[lr] > u * shifted[lr])
                if np.any(bad):
                    raise _Breakdown(int(lr[np.argmax(bad)]), "B1")

    L = _assemble(n, L_diag, L_rows, L_vals, with_diag=True)
    R = dropped = None
    if keep_discarded:
        R = _assemble(n, None, R_rows, R_vals, with_diag=False)
        dropped = _assemble(n, None, [d[0] for d in dropped_cols], [d[1] for d in dropped_cols],
                            with_diag=False)
    return L, R, dropped, checks, lookahead


def _assemble(n, diag, rows, vals, with_diag: bool) -> SparseMatrix:
    col_ptr = [0]
    all_rows, all_vals = [], []
    for j in range(n):
        if with_diag:
            all_rows.append(np.array([j]))
            all_vals.append(np.array([diag[j]]))
        all_rows.append(rows[j])
        all_vals.append(vals[j])
        col_ptr.append(col_ptr[-1] + (1 if with_diag else 0) + rows[j].size)
    r = np.concatenate(all_rows) if all_rows else np.zeros(0, dtype=np.int64)
    v = np.concatenate(all_vals) if all_vals else np.zeros(0)
    keep = v != 0
    if not keep.all():
        M = sp.csc_matrix((v, r, col_ptr), shape=(n, n))
        M.eliminate_zeros()
        return SparseMatrix(n, n, M.indptr, M.indices, M.data, check=False)
    return SparseMatrix(n, n, col_ptr, r, v, check=False)


def _next_up(fmt: FpFormat, x: float) -> float:
    if fmt.dtype is not None:
        return float(np.nextafter(fmt.dtype.type(x), fmt.dtype.type(np.inf)))
    return round_to(fmt, x + max(fmt.x_min_subnormal, abs(x) * 2.0 * fmt.unit_roundoff))


def _factor_with_shifts(C, fmt, select, shifts: Optional[ShiftPolicy], keep_discarded, audit_b3,
                        all_checks: Optional[list] = None) -> ICFactor:
    fmt = get_format(fmt)
    shifts = shifts or ShiftPolicy()
    Cl = _lower_part(C)
    diag_max = float(np.max(np.abs(Cl.to_scipy().diagonal()), initial=0.0))
    alpha = 0.0
    log: List[BreakdownEvent] = []
    while True:
        checks: List[B3Check] = []
        try:
            L, R, dropped, checks, la = _factor_once(Cl, fmt, alpha, select, keep_discarded, audit_b3,
                                                     checks)
        except _Breakdown as bd:
            if all_checks is not None:
                all_checks.extend(checks)
                all_checks.append(bd)
            if shifts.max_restarts is not None and len(log) >= shifts.max_restarts:
                raise ShiftBudgetExceeded(alpha, alpha)
            new_alpha = round_to(fmt, next_shift(shifts, alpha, diag_max))
            if new_alpha <= alpha:
                # the shift vanished in rounding; step to the next representable value
                new_alpha = _next_up(fmt, alpha)
                if new_alpha > shifts.cap_factor * diag_max:
                    raise ShiftBudgetExceeded(new_alpha, shifts.cap_factor * diag_max)
            log.append(BreakdownEvent(bd.column, bd.kind, f"restart with alpha={new_alpha:.6g}", new_alpha))
            alpha = new_alpha
            continue
        if all_checks is not None:
            all_checks.extend(checks)
        return ICFactor(L, fmt, alpha, len(log), tuple(log), tuple(checks), R, dropped, la)


def ic_memory_limited(C, limits: MemLimits, fmt: Union[str, FpFormat] = FP64,
                      shifts: Optional[ShiftPolicy] = None, keep_discarded: bool = False,
                      audit_b3: bool = False, trace: Optional[list] = None) -> ICFactor:
    """Memory-limited left-looking IC factorization of a normal matrix.

    Column ``j`` keeps its pivot plus the ``limits.lsize`` largest off-diagonal
    entries in L and the next ``limits.rsize`` in R; products of two R entries
    are never applied. With ``audit_b3`` every column is computed with
    per-operation overflow checks, so :attr:`ICFactor.b3_checks` can be
    compared against the ``b3_safe`` prediction. ``trace`` (a list) receives
    every check and breakdown across all restarts.
    """
    return _factor_with_shifts(C, fmt, _memlimited_selector(limits), shifts, keep_discarded,
                               audit_b3, trace)


def ic_level(C, level: int, fmt: Union[str, FpFormat] = FP64,
             shifts: Optional[ShiftPolicy] = None, pattern: Optional[LevelPattern] = None) -> ICFactor:
    """Level-based IC(level) factorization restricted to the symbolic pattern."""
    if pattern is None:
        pattern = symbolic_levels(_lower_part(C), level)
    return _factor_with_shifts(C, fmt, _pattern_selector(pattern), shifts, False, False)
