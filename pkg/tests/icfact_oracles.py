"""Dense reference implementations for the incomplete Cholesky tests."""

import numpy as np


def dense_levels(C, level):
    """O(n^3) level-of-fill recurrence on a dense symmetric pattern."""
    n = C.shape[0]
    inf = 10 ** 9
    lev = np.where(np.tril(C) != 0, 0, inf)
    np.fill_diagonal(lev, 0)
    for k in range(n):
        for j in range(k + 1, n):
            if lev[j, k] > level:
                continue
            for i in range(j, n):
                if lev[i, k] <= level:
                    lev[i, j] = min(lev[i, j], lev[i, k] + lev[j, k] + 1)
    return {(i, j) for j in range(n) for i in range(j, n) if lev[i, j] <= level}


def memlimited_dense(C, lsize, rsize, r=lambda v: v, alpha=0.0):
    """Scripted left-looking memory-limited IC on dense arrays.

    Update order per entry matches the sparse engine, so with a rounding
    function ``r`` the results can be compared bitwise.
    """
    n = C.shape[0]
    L = np.zeros((n, n))
    R = np.zeros((n, n))
    dropped = np.zeros((n, n))
    for j in range(n):
        w = np.zeros(n)
        w[j:] = C[j:, j]
        w[j] = r(C[j, j] + alpha) if alpha else C[j, j]
        for k in range(j):
            if L[j, k] != 0:
                for F in (L, R):
                    for i in range(j, n):
                        if F[i, k] != 0:
                            w[i] = r(w[i] - r(F[i, k] * L[j, k]))
        for k in range(j):
            if R[j, k] != 0:
                for i in range(j, n):
                    if L[i, k] != 0:
                        w[i] = r(w[i] - r(L[i, k] * R[j, k]))
        cand = [i for i in range(j + 1, n) if w[i] != 0]
        cand.sort(key=lambda i: (-abs(w[i]), i))
        piv = r(np.sqrt(w[j]))
        L[j, j] = piv
        for i in cand[:lsize]:
            L[i, j] = r(w[i] / piv)
        for i in cand[lsize:lsize + rsize]:
            R[i, j] = r(w[i] / piv)
        for i in cand[lsize + rsize:]:
            dropped[i, j] = w[i]
    return L, R, dropped
