"""Matrix Market loading, seeded right-hand sides and result serialization."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, ParseError
from .sparsela import SparseMatrix

PathLike = Union[str, Path]

# 64-bit LCG (Knuth's MMIX constants); top 53 bits give a double in [0, 1)
LCG_A = 6364136223846793005
LCG_C = 1442695040888963407
_MASK = (1 << 64) - 1


def _lcg_jump(k: int):
    """Multiplier and increment advancing the generator by ``k`` steps."""
    a, c, ra, rc = LCG_A, LCG_C, 1, 0
    while k:
        if k & 1:
            ra, rc = (ra * a) & _MASK, (rc * a + c) & _MASK
        a, c = (a * a) & _MASK, (c * (a + 1)) & _MASK
        k >>= 1
    return ra, rc


def random_rhs(m: int, seed: int) -> np.ndarray:
    """Deterministic vector of ``m`` values uniform in ``[-1, 1]``.

    State ``s_0 = seed mod 2^64``; ``s_{k+1} = a s_k + c mod 2^64``; entry ``k``
    is ``2 (s_{k+1} >> 11) / 2^53 - 1``. Integer-only, so identical on every
    platform.
    """
    if m <= 0:
        raise ValueError("m must be positive")
    ak = np.empty(m, dtype=np.uint64)
    ck = np.empty(m, dtype=np.uint64)
    # jump coefficients for 1..m steps, built by doubling the filled prefix
    ak[0], ck[0] = LCG_A, LCG_C
    filled = 1
    with np.errstate(over="ignore"):
        while filled < m:
            take = min(filled, m - filled)
            ja, jc = (np.uint64(v) for v in _lcg_jump(filled))
            ak[filled:filled + take] = ak[:take] * ja
            ck[filled:filled + take] = ck[:take] * ja + jc
            filled += take
        states = ak * np.uint64(seed & _MASK) + ck
    top = (states >> np.uint64(11)).astype(np.float64)
    return 2.0 * top / 2.0 ** 53 - 1.0


# --------------------------------------------------------------------------
# Matrix Market

def _parse_number(tok: str, field: str, lineno: int) -> float:
    try:
        return float(int(tok)) if field == "integer" else float(tok)
    except ValueError:
        raise ParseError(f"bad numeric value {tok!r}", lineno) from None


def load_matrix_market(path: PathLike) -> SparseMatrix:
    """Read a real/integer, general/symmetric Matrix Market file.

    Symmetric inputs are expanded, duplicate coordinates summed and explicit
    zeros dropped.
    """
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1)
    head = lines[0].split()
    if len(head) != 5 or head[0].lower() != "%%matrixmarket" or head[1].lower() != "matrix":
        raise ParseError("missing %%MatrixMarket matrix header", 1)
    layout, field, symmetry = (h.lower() for h in head[2:])
    if layout not in ("coordinate", "array"):
        raise ParseError(f"unsupported layout {layout!r}", 1)
    if field not in ("real", "integer", "double"):
        raise ParseError(f"unsupported field {field!r}", 1)
    if symmetry not in ("general", "symmetric"):
        raise ParseError(f"unsupported symmetry {symmetry!r}", 1)

    body = [(k + 1, ln.split()) for k, ln in enumerate(lines[1:], start=1)
            if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise ParseError("missing size line", len(lines))
    size_line, size = body[0]
    try:
        dims = [int(t) for t in size]
    except ValueError:
        raise ParseError("bad size line", size_line) from None
    entries = body[1:]

    if layout == "coordinate":
        if len(dims) != 3:
            raise ParseError("coordinate size line needs 3 integers", size_line)
        m, n, nnz = dims
        if len(entries) != nnz:
            where = entries[-1][0] if entries else size_line
            raise ParseError(f"expected {nnz} entries, found {len(entries)}", where)
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        for k, (lineno, toks) in enumerate(entries):
            if len(toks) != 3:
                raise ParseError("entry needs row, column and value", lineno)
            try:
                i, j = int(toks[0]), int(toks[1])
            except ValueError:
                raise ParseError("bad index", lineno) from None
            if not (1 <= i <= m and 1 <= j <= n):
                raise ParseError(f"index ({i},{j}) outside {m}x{n}", lineno)
            if symmetry == "symmetric" and i < j:
                raise ParseError("symmetric file has an entry above the diagonal", lineno)
            rows[k], cols[k] = i - 1, j - 1
            vals[k] = _parse_number(toks[2], field, lineno)
    else:
        if len(dims) != 2:
            raise ParseError("array size line needs 2 integers", size_line)
        m, n = dims
        if symmetry == "symmetric":
            # column-major lower triangle
            cols = np.concatenate([np.full(n - j, j) for j in range(n)])
            rows = np.concatenate([np.arange(j, n) for j in range(n)])
        else:
            cols, rows = np.divmod(np.arange(m * n), m)
        if len(entries) != len(rows):
            where = entries[-1][0] if entries else size_line
            raise ParseError(f"expected {len(rows)} values, found {len(entries)}", where)
        vals = np.empty(len(rows))
        for k, (lineno, toks) in enumerate(entries):
            if len(toks) != 1:
                raise ParseError("array entry needs one value", lineno)
            vals[k] = _parse_number(toks[0], field, lineno)
    if m <= 0 or n <= 0:
        raise DimensionError(f"invalid dimensions {m}x{n}")
    if symmetry == "symmetric":
        if m != n:
            raise DimensionError("symmetric matrix must be square")
        off = rows != cols
        rows, cols, vals = (np.concatenate([rows, cols[off]]), np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, vals[off]]))
    M = sp.coo_matrix((vals, (rows, cols)), shape=(m, n)).tocsc()  # sums duplicates
    M.sum_duplicates()
    M.eliminate_zeros()
    M.sort_indices()
    return SparseMatrix.from_scipy(M)


def write_matrix_market(path: PathLike, A: SparseMatrix, comment: str = "") -> None:
    """Write ``A`` in coordinate real general format (values in full precision)."""
    M = A.to_scipy().tocoo()
    with open(path, "w", encoding="ascii") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        for line in comment.splitlines():
            fh.write(f"% {line}\n")
        fh.write(f"{A.nrows} {A.ncols} {M.nnz}\n")
        for i, j, v in zip(M.row, M.col, M.data):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


@dataclass(frozen=True)
class ProblemSpec:
    path: str
    transpose_if_underdetermined: bool = True
    rhs_seed: int = 0

    @property
    def name(self) -> str:
        return Path(self.path).stem


def load_problem(spec: ProblemSpec):
    """Load ``A`` (transposed when it has fewer rows than columns) and its ``b``."""
    A = load_matrix_market(spec.path)
    if spec.transpose_if_underdetermined and A.nrows < A.ncols:
        A = A.transpose()
    return A, random_rhs(A.nrows, spec.rhs_seed)


# --------------------------------------------------------------------------
# Results

@dataclass
class RunRecord:
    """One solver run, flattened for tables and files."""

    problem: str
    precond: str = "none"
    level: Optional[int] = None
    lsize: Optional[int] = None
    rsize: Optional[int] = None
    fact: str = "fp64"
    apply: str = "fp64"
    matvec: str = "fp64"
    stop: str = "pt"
    delta: float = 1e-10
    reorth: str = "none"
    iterations: int = 0
    termination: str = ""
    ratio_pt: Optional[float] = None
    ratio_gs: Optional[float] = None
    ratio_ps: Optional[float] = None
    rnorm: Optional[float] = None
    alpha: float = 0.0
    restarts: int = 0
    nz_l: int = 0
    lost_entries: int = 0
    nout: Optional[int] = None
    nsol: Optional[int] = None
    wall_time: float = 0.0
    error: Optional[str] = None

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Dict) -> "RunRecord":
        return cls(**{f.name: d[f.name] for f in fields(cls) if f.name in d})


HISTORY_COLUMNS = ("iter", "phibar", "est_normt_r", "ratio_pt", "ratio_gs", "rnorm_true")
_INT_FIELDS = {f.name for f in fields(RunRecord) if "int" in str(f.type)}
_FLOAT_FIELDS = {f.name for f in fields(RunRecord) if "float" in str(f.type)}


def history_rows(report) -> List[Dict]:
    """History rows of a :class:`SolveReport`; ``rnorm_true`` on the last row only."""
    rows = []
    for rec in report.history:
        rows.append({"iter": rec.iter, "phibar": rec.phibar, "est_normt_r": rec.est_norm_ar,
                     "ratio_pt": rec.ratio_pt, "ratio_gs": rec.ratio_gs, "rnorm_true": None})
    if rows:
        rows[-1]["rnorm_true"] = report.rnorm
    return rows


def _cell(v) -> str:
    return "" if v is None else repr(v) if isinstance(v, float) else str(v)


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def _from_json(v):
    if isinstance(v, str) and v in ("inf", "-inf", "nan"):
        return float(v)
    return v


def write_history(records: Sequence[RunRecord], histories: Sequence[Sequence[Dict]], path: PathLike,
                  format: str = "csv") -> List[Path]:
    """Write ``run_<k>.<ext>`` per run plus ``summary.<ext>`` into directory ``path``.

    ``histories[k]`` holds the rows (see :func:`history_rows`) of run ``k``.
    Returns the paths written.
    """
    if format not in ("csv", "json"):
        raise ValueError(f"unknown format {format!r}")
    if len(records) != len(histories):
        raise ValueError("records and histories differ in length")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for k, rows in enumerate(histories):
        p = out / f"run_{k:04d}.{format}"
        if format == "csv":
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(HISTORY_COLUMNS)
                for r in rows:
                    w.writerow([_cell(r.get(c)) for c in HISTORY_COLUMNS])
        else:
            with open(p, "w") as fh:
                json.dump([{c: _json_safe(r.get(c)) for c in HISTORY_COLUMNS} for r in rows], fh, indent=1)
        written.append(p)
    p = out / f"summary.{format}"
    names = [f.name for f in fields(RunRecord)]
    if format == "csv":
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for rec in records:
                d = rec.to_dict()
                w.writerow([_cell(d[c]) for c in names])
    else:
        with open(p, "w") as fh:
            json.dump([{k: _json_safe(v) for k, v in rec.to_dict().items()} for rec in records], fh, indent=1)
    written.append(p)
    return written


def read_history(path: PathLike) -> List[Dict]:
    """Parse a per-run history file written by :func:`write_history`."""
    path = Path(path)
    if path.suffix == ".json":
        with open(path) as fh:
            return [{k: _from_json(v) for k, v in r.items()} for r in json.load(fh)]
    rows = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            rows.append({c: (None if r[c] == "" else int(r[c]) if c == "iter" else float(r[c]))
                         for c in HISTORY_COLUMNS})
    return rows


def read_summary(path: PathLike) -> List[RunRecord]:
    """Parse a summary file written by :func:`write_history`."""
    path = Path(path)
    if path.suffix == ".json":
        with open(path) as fh:
            return [RunRecord.from_dict({k: _from_json(v) for k, v in d.items()}) for d in json.load(fh)]
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            d = {}
            for k, v in r.items():
                if v == "":
                    d[k] = None
                elif k in _INT_FIELDS:
                    d[k] = int(v)
                elif k in _FLOAT_FIELDS:
                    d[k] = float(v)
                else:
                    d[k] = v
            out.append(RunRecord.from_dict(d))
    return out
