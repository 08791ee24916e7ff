"""Compressed sparse column storage and the kernels least squares needs.

Column scaling, normal-matrix formation, products with A and A^T, and
triangular solves with an incomplete factor, each in a chosen emulated
precision. fp64 paths delegate to scipy.sparse; narrower formats round the
fp64 result (products) or every elementary operation (triangular solves).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from .errors import ApplyBreakdown, DimensionError, ZeroColumn
from .precision import FP64, FpFlags, FpFormat, get_format, round_to

FormatLike = Union[str, FpFormat]


class SparseMatrix:
    """Immutable m x n matrix in compressed sparse column form.

    Row indices are strictly increasing inside each column and no explicit
    zeros are stored.
    """

    def __init__(self, nrows: int, ncols: int, col_ptr, row_idx, values, check: bool = True):
        self.nrows = int(nrows)
        self.ncols = int(ncols)
        self.col_ptr = np.asarray(col_ptr, dtype=np.int64)
        self.row_idx = np.asarray(row_idx, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.float64)
        for a in (self.col_ptr, self.row_idx, self.values):
            a.setflags(write=False)
        self._csc: Optional[sp.csc_matrix] = None
        self._csr: Optional[sp.csr_matrix] = None
        self._columns: Optional[List[Tuple[np.ndarray, np.ndarray]]] = None
        self._rows: Optional[List[Tuple[np.ndarray, np.ndarray]]] = None
        if check:
            self._validate()

    def _validate(self) -> None:
        cp, ri = self.col_ptr, self.row_idx
        if cp.shape != (self.ncols + 1,) or cp[0] != 0 or cp[-1] != ri.size:
            raise DimensionError("col_ptr must have length n+1, start at 0 and end at nnz")
        if ri.size != self.values.size:
            raise DimensionError("row_idx and values differ in length")
        if np.any(np.diff(cp) < 0):
            raise DimensionError("col_ptr must be nondecreasing")
        if ri.size and (ri.min() < 0 or ri.max() >= self.nrows):
            raise DimensionError("row index out of range")
        # strictly increasing rows within each column
        step = np.diff(ri)
        starts = np.zeros(ri.size, dtype=bool)
        starts[cp[:-1][cp[:-1] < ri.size]] = True
        if np.any((step <= 0) & ~starts[1:]):
            raise DimensionError("row indices must be strictly increasing within a column")
        if np.any(self.values == 0):
            raise DimensionError("explicit zeros are not allowed")

    # construction ---------------------------------------------------------

    @classmethod
    def from_scipy(cls, M) -> "SparseMatrix":
        M = sp.csc_matrix(M, dtype=np.float64, copy=True)
        M.sum_duplicates()
        M.eliminate_zeros()
        M.sort_indices()
        return cls(M.shape[0], M.shape[1], M.indptr, M.indices, M.data)

    @classmethod
    def from_dense(cls, D) -> "SparseMatrix":
        return cls.from_scipy(sp.csc_matrix(np.atleast_2d(np.asarray(D, dtype=np.float64))))

    @classmethod
    def identity(cls, n: int) -> "SparseMatrix":
        return cls(n, n, np.arange(n + 1), np.arange(n), np.ones(n))

    # views ----------------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nrows, self.ncols)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def to_scipy(self) -> sp.csc_matrix:
        if self._csc is None:
            self._csc = sp.csc_matrix((self.values, self.row_idx, self.col_ptr), shape=self.shape)
        return self._csc

    def to_csr(self) -> sp.csr_matrix:
        if self._csr is None:
            self._csr = self.to_scipy().tocsr()
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def column(self, j: int) -> Tuple[np.ndarray, np.ndarray]:
        lo, hi = self.col_ptr[j], self.col_ptr[j + 1]
        return self.row_idx[lo:hi], self.values[lo:hi]

    def columns(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        if self._columns is None:
            self._columns = [self.column(j) for j in range(self.ncols)]
        return self._columns

    def rows(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Per-row (column indices, values), column indices increasing."""
        if self._rows is None:
            R = self.to_csr()
            self._rows = [(R.indices[R.indptr[i]:R.indptr[i + 1]], R.data[R.indptr[i]:R.indptr[i + 1]])
                          for i in range(self.nrows)]
        return self._rows

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_scipy(self.to_scipy().T)

    def column_norms(self) -> np.ndarray:
        sq = np.zeros(self.ncols)
        np.add.at(sq, np.repeat(np.arange(self.ncols), np.diff(self.col_ptr)), self.values ** 2)
        return np.sqrt(sq)

    def __repr__(self) -> str:
        return f"SparseMatrix({self.nrows}x{self.ncols}, nnz={self.nnz})"


@dataclass(frozen=True)
class ScaledProblem:
    """``B = A diag(S)`` with unit 2-norm columns, plus the right-hand side."""

    B: SparseMatrix
    S: np.ndarray
    b: Optional[np.ndarray] = None


@dataclass(frozen=True)
class NormalMatrix:
    """Lower triangle of ``B^T B`` stored in ``format``."""

    C: SparseMatrix
    format: FpFormat
    lost_entries: int

    @property
    def n(self) -> int:
        return self.C.ncols

    def diagonal(self) -> np.ndarray:
        return self.C.to_scipy().diagonal()

    def full(self) -> sp.csc_matrix:
        L = self.C.to_scipy()
        return (L + sp.tril(L, -1).T).tocsc()


def scale_columns(A: SparseMatrix, b: Optional[np.ndarray] = None) -> ScaledProblem:
    """Scale every column of ``A`` to unit 2-norm (fp64)."""
    norms = A.column_norms()
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ZeroColumn(int(zero[0]))
    S = 1.0 / norms
    vals = A.values * np.repeat(S, np.diff(A.col_ptr))
    B = SparseMatrix(A.nrows, A.ncols, A.col_ptr, A.row_idx, vals, check=False)
    return ScaledProblem(B, S, None if b is None else np.asarray(b, dtype=np.float64))


def squeeze_matrix(A: SparseMatrix, fmt: FormatLike):
    """Round the entries of ``A`` to ``fmt`` and compact away new zeros.

    Returns the squeezed matrix and the :class:`ConversionAudit`.
    """
    from .precision import squeeze_values

    fmt = get_format(fmt)
    vals, audit = squeeze_values(fmt, A.values)
    M = sp.csc_matrix((np.array(vals), A.row_idx.copy(), A.col_ptr.copy()), shape=A.shape)
    M.eliminate_zeros()
    return SparseMatrix(A.nrows, A.ncols, M.indptr, M.indices, M.data, check=False), audit


def form_normal(B: SparseMatrix, fmt: FormatLike = FP64) -> NormalMatrix:
    """Lower triangle of ``B^T B``: fp64 inner products, one rounding each.

    Entries whose fp64 value is nonzero but round to zero in ``fmt`` are
    dropped and counted in ``lost_entries``.
    """
    fmt = get_format(fmt)
    Bs = B.to_scipy()
    C = sp.tril((Bs.T @ Bs).tocsc()).tocsc()
    C.sort_indices()
    exact = C.data.copy()
    C.data = round_to(fmt, exact)
    lost = int(np.count_nonzero((C.data == 0) & (exact != 0)))
    C.eliminate_zeros()
    Cm = SparseMatrix(C.shape[0], C.shape[1], C.indptr, C.indices, C.data, check=False)
    return NormalMatrix(Cm, fmt, lost)


def _finish(y: np.ndarray, fmt: FpFormat, flags: Optional[FpFlags]) -> np.ndarray:
    if fmt.is_working:
        return y
    return round_to(fmt, y, flags)


def matvec(A: SparseMatrix, x, fmt: FormatLike = FP64, flags: Optional[FpFlags] = None) -> np.ndarray:
    """``A @ x`` accumulated in fp64, each component rounded once to ``fmt``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.ncols,):
        raise DimensionError(f"expected vector of length {A.ncols}, got {x.shape}")
    return _finish(A.to_scipy() @ x, get_format(fmt), flags)


def matvec_t(A: SparseMatrix, y, fmt: FormatLike = FP64, flags: Optional[FpFlags] = None) -> np.ndarray:
    """``A.T @ y`` accumulated in fp64, each component rounded once to ``fmt``."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (A.nrows,):
        raise DimensionError(f"expected vector of length {A.nrows}, got {y.shape}")
    return _finish(A.to_scipy().T @ y, get_format(fmt), flags)


def _check_finite(x: np.ndarray, order) -> None:
    bad = ~np.isfinite(x)
    if np.any(bad):
        pos = next(int(j) for j in order if bad[j])
        raise ApplyBreakdown(pos)


def solve_lower(L: SparseMatrix, rhs, fmt: FormatLike = FP64) -> np.ndarray:
    """Forward substitution with lower-triangular ``L``.

    Below fp64 every multiply, subtract and divide is rounded to ``fmt``.
    Raises :class:`ApplyBreakdown` if any intermediate overflows.
    """
    fmt = get_format(fmt)
    n = L.ncols
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != (n,):
        raise DimensionError(f"expected vector of length {n}, got {rhs.shape}")
    if fmt.is_working:
        with np.errstate(over="ignore", invalid="ignore"):
            x = spsolve_triangular(L.to_csr(), rhs, lower=True)
        _check_finite(x, range(n))
        return x
    x = round_to(fmt, rhs)
    cols = L.columns()
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(n):
            rows, vals = cols[j]
            xj = round_to(fmt, x[j] / vals[0])
            x[j] = xj
            if rows.size > 1:
                r = rows[1:]
                x[r] = round_to(fmt, x[r] - round_to(fmt, vals[1:] * xj))
    _check_finite(x, range(n))
    return x


def solve_upper_t(L: SparseMatrix, rhs, fmt: FormatLike = FP64) -> np.ndarray:
    """Backward substitution with ``L^T`` (``L`` lower triangular)."""
    fmt = get_format(fmt)
    n = L.ncols
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != (n,):
        raise DimensionError(f"expected vector of length {n}, got {rhs.shape}")
    if fmt.is_working:
        with np.errstate(over="ignore", invalid="ignore"):
            x = spsolve_triangular(L.to_scipy().T.tocsr(), rhs, lower=False)
        _check_finite(x, range(n - 1, -1, -1))
        return x
    x = round_to(fmt, rhs)
    rows_of_L = L.rows()
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(n - 1, -1, -1):
            cols, vals = rows_of_L[j]
            xj = round_to(fmt, x[j] / vals[-1])
            x[j] = xj
            if cols.size > 1:
                c = cols[:-1]
                x[c] = round_to(fmt, x[c] - round_to(fmt, vals[:-1] * xj))
    _check_finite(x, range(n - 1, -1, -1))
    return x
