"""Shared random problem generators for the test suite."""

import numpy as np
import pytest
import scipy.sparse as sp

from icls.sparsela import SparseMatrix


def random_spd(rng, n, density=0.3, dominance=0.5):
    """Sparse SPD matrix with unit-ish diagonal (returned dense)."""
    M = sp.random(n, n, density=density, random_state=rng).toarray()
    M = M + M.T
    M = M - np.diag(np.diag(M))
    d = np.abs(M).sum(axis=1) + dominance + rng.uniform(0, 1, n)
    return M + np.diag(d)


def random_normal_matrix(rng, m, n, density=0.2):
    """``A^T A`` for a sparse full-rank ``A`` (dense result)."""
    A = sp.random(m, n, density=density, random_state=rng).toarray()
    A[np.arange(n), np.arange(n)] += 1.0
    return A.T @ A


def random_ls(rng, m=50, n=20, kind="gauss"):
    """Random full-rank least-squares problem ``(A, b)``."""
    if kind == "gauss":
        D = rng.standard_normal((m, n))
    else:
        D = sp.random(m, n, density=0.25, random_state=rng).toarray()
        D[np.arange(n), np.arange(n)] += 1.0
    return SparseMatrix.from_dense(D), rng.uniform(-1, 1, m)


def lower(C):
    return SparseMatrix.from_scipy(sp.csc_matrix(np.tril(C)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
