"""Symbolic level-of-fill patterns for IC(l)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from ..sparsela import NormalMatrix, SparseMatrix


@dataclass(frozen=True)
class LevelPattern:
    """Lower-triangular pattern admitted by IC(level).

    ``pattern[j]`` holds the sorted row indices (diagonal first) of column
    ``j``; ``levels[j]`` the matching fill levels (0 for entries of C).
    """

    level: int
    pattern: List[np.ndarray]
    levels: List[np.ndarray]

    @property
    def nnz(self) -> int:
        return int(sum(p.size for p in self.pattern))

    def as_set(self):
        return {(int(i), j) for j, rows in enumerate(self.pattern) for i in rows}


def symbolic_levels(C, level: int) -> LevelPattern:
    """Left-looking symbolic factorization keeping fill of level <= ``level``.

    ``level(i, j) = min_k level(i, k) + level(k, j) + 1`` over retained
    entries, with entries of ``C`` at level 0.
    """
    Cl = C.C if isinstance(C, NormalMatrix) else C
    if not isinstance(Cl, SparseMatrix):
        raise TypeError("expected NormalMatrix or lower-triangular SparseMatrix")
    n = Cl.ncols
    pattern: List[np.ndarray] = []
    levels: List[np.ndarray] = []
    # row_entries[i]: (k, level(i,k)) of retained off-diagonals, k increasing
    row_entries: List[List[tuple]] = [[] for _ in range(n)]
    for j in range(n):
        lev = {}
        rows, _ = Cl.column(j)
        for i in rows:
            if i >= j:
                lev[int(i)] = 0
        lev[j] = 0
        for k, ljk in row_entries[j]:
            rk, lk = pattern[k], levels[k]
            for i, lik in zip(rk, lk):
                if i <= j:
                    continue
                cand = int(lik) + ljk + 1
                if cand <= level and cand < lev.get(int(i), level + 1):
                    lev[int(i)] = cand
        order = sorted(lev)
        prow = np.array(order, dtype=np.int64)
        plev = np.array([lev[i] for i in order], dtype=np.int64)
        pattern.append(prow)
        levels.append(plev)
        for i, li in zip(prow[1:], plev[1:]):
            row_entries[int(i)].append((j, int(li)))
    return LevelPattern(level, pattern, levels)
