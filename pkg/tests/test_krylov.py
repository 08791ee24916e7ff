import math
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_ls
from krylov_helpers import estimator_violations
from icls.errors import BasisMemoryExceeded
from icls.icfact import MemLimits, ic_memory_limited
from icls.krylov import (AdaptiveEstimator, Basis, ICPreconditioner, IdentityPreconditioner,
                         ReorthPolicy, StoppingConfig, estimate_norm2, lsqr, ratio_gs, ratio_ps,
                         ratio_pt, reorthogonalize)
from icls.precision import FP16, FP32
from icls.sparsela import SparseMatrix, form_normal, scale_columns


def lstsq(A, b):
    return np.linalg.lstsq(A.to_dense(), b, rcond=None)[0]


def test_stopping_config_validation():
    with pytest.raises(ValueError):
        StoppingConfig("xx")
    with pytest.raises(ValueError):
        StoppingConfig("pt", -1.0)


def test_reorth_policy_parse():
    assert ReorthPolicy.parse("partial:4") == ReorthPolicy("partial", 4)
    assert ReorthPolicy.parse("one-sided").on_p and not ReorthPolicy.parse("one-sided").on_q
    assert str(ReorthPolicy.parse("full")) == "full"
    for bad in ("sometimes", "partial:-1"):
        with pytest.raises(ValueError):
            ReorthPolicy.parse(bad)


def test_matches_dense_oracle(rng):
    for _ in range(5):
        A, b = random_ls(rng)
        z, rep = lsqr(A, b, cfg=StoppingConfig("pt", 1e-10))
        xs = lstsq(A, b)
        assert rep.converged
        assert np.linalg.norm(rep.y - xs) <= 1e-8 * np.linalg.norm(xs)
        np.testing.assert_array_equal(z, rep.y)  # identity preconditioner
        assert len(rep.history) == rep.iterations
        assert rep.ratio_pt <= 1e-10


def test_orthonormal_consistent_one_iteration(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((30, 5)))
    x = rng.standard_normal(5)
    B = SparseMatrix.from_dense(Q)
    z, rep = lsqr(B, Q @ x)
    assert rep.iterations == 1
    np.testing.assert_allclose(z, x, atol=1e-12)


def test_rhs_orthogonal_to_range(rng):
    D = rng.standard_normal((20, 6))
    P = np.eye(20) - D @ np.linalg.pinv(D)
    b = P @ rng.standard_normal(20)
    z, rep = lsqr(SparseMatrix.from_dense(D), b)
    assert rep.termination in ("lucky_breakdown", "converged")
    assert rep.iterations <= 1
    np.testing.assert_allclose(z, 0.0, atol=1e-12)
    assert rep.rnorm == pytest.approx(np.linalg.norm(b), rel=1e-12)


def test_zero_rhs():
    A = SparseMatrix.identity(4)
    z, rep = lsqr(A, np.zeros(4))
    assert rep.iterations == 0 and rep.converged and not z.any()


def test_recurrences(rng):
    A, b = random_ls(rng)
    _, rep = lsqr(A, b, cfg=StoppingConfig("pt", 1e-12), keep_iterates=True, record_gs=True)
    D = A.to_dense()
    phibar = [h.phibar for h in rep.history]
    assert all(p1 <= p0 * (1 + 1e-14) for p0, p1 in zip(phibar, phibar[1:]))
    for rec, y in zip(rep.history, rep.iterates):
        assert abs(rec.phibar - np.linalg.norm(b - D @ y)) <= 1e-8 * np.linalg.norm(b)
        r = b - D @ y
        assert rec.est_norm_ar == pytest.approx(np.linalg.norm(D.T @ r), rel=1e-6, abs=1e-10)
        assert rec.ratio_gs is not None


def test_givens_validity(rng, monkeypatch):
    mod = sys.modules["icls.krylov.lsqr"]
    seen = []
    real_hypot = math.hypot

    class Spy:
        def __getattr__(self, name):
            return getattr(math, name)

        @staticmethod
        def hypot(a, b):
            rho = real_hypot(a, b)
            seen.append((a / rho, b / rho))
            return rho

    monkeypatch.setattr(mod, "math", Spy())
    A, b = random_ls(rng)
    lsqr(A, b)
    assert seen
    for c, s in seen:
        assert abs(c * c + s * s - 1) <= 4 * np.finfo(float).eps


def test_full_reorth_keeps_orthonormal_basis(rng, monkeypatch):
    mod = sys.modules["icls.krylov.lsqr"]
    bases = []
    real = mod.Basis

    class Keep(real):
        def __init__(self, *a, **k):
            super().__init__(*a, **k)
            bases.append(self)

    monkeypatch.setattr(mod, "Basis", Keep)
    A, b = random_ls(rng, 150, 100, kind="sparse")
    lsqr(A, b, cfg=StoppingConfig("pt", 1e-14, max_iterations=100), reorth="full")
    for B in bases:
        V = B.last()
        assert np.max(np.abs(V.T @ V - np.eye(V.shape[1]))) <= 1e-10


@pytest.mark.parametrize("policy", ["none", "full", "one-sided", "partial:3"])
def test_reorth_variants_reach_same_solution(rng, policy):
    A, b = random_ls(rng)
    _, rep = lsqr(A, b, cfg=StoppingConfig("pt", 1e-10), reorth=policy)
    xs = lstsq(A, b)
    assert np.linalg.norm(rep.y - xs) <= 1e-7 * np.linalg.norm(xs)


def test_basis_memory_cap(rng):
    A, b = random_ls(rng)
    with pytest.raises(BasisMemoryExceeded):
        lsqr(A, b, reorth="full", max_basis_bytes=5 * 50 * 8)


def test_reorthogonalize_lucky_and_plain(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((10, 3)))
    v, nrm, lucky = reorthogonalize(Q, Q @ np.array([1.0, 2.0, 3.0]))
    assert lucky
    w = rng.standard_normal(10)
    v, nrm, lucky = reorthogonalize(Q, w)
    assert not lucky and np.linalg.norm(Q.T @ v) < 1e-14 and np.linalg.norm(v) == pytest.approx(1)
    B = Basis(10)
    for k in range(20):
        B.append(np.full(10, k))
    assert B.size == 20 and B.last(2)[0].tolist() == [18, 19]


@pytest.mark.parametrize("criterion", ["gs", "ps", "pt"])
def test_each_criterion_converges(rng, criterion):
    A, b = random_ls(rng)
    _, rep = lsqr(A, b, cfg=StoppingConfig(criterion, 1e-9))
    assert rep.termination == "converged"
    xs = lstsq(A, b)
    assert np.linalg.norm(rep.y - xs) <= 1e-5 * np.linalg.norm(xs)
    if criterion == "gs":
        assert rep.history[-1].ratio_gs < 1e-9
    if criterion == "pt":
        assert rep.ratio_pt <= 1e-9


def test_consistent_system_branches(rng):
    D = rng.standard_normal((40, 10))
    x = rng.standard_normal(10)
    A = SparseMatrix.from_dense(D)
    _, rep = lsqr(A, D @ x, cfg=StoppingConfig("ps", 1e-30, delta_b=1e-10))
    assert rep.termination == "converged" and rep.rnorm <= 1e-8
    _, rep = lsqr(A, D @ x, cfg=StoppingConfig("gs", 1e-30, delta1=1e-9))
    assert rep.termination == "converged" and rep.rnorm < 1e-9


def test_max_iter_and_check_period(rng):
    A, b = random_ls(rng)
    _, rep = lsqr(A, b, cfg=StoppingConfig("pt", 1e-10, max_iterations=3))
    assert rep.termination == "max_iter" and rep.iterations == 3
    _, rep = lsqr(A, b, cfg=StoppingConfig("gs", 1e-8, check_period=4))
    assert rep.iterations % 4 == 0
    assert all((h.ratio_gs is None) == (h.iter % 4 != 0) for h in rep.history)


def test_gs_stagnation():
    # fp16 products cap the attainable accuracy far above the tolerance
    rng = np.random.default_rng(3)
    A, b = random_ls(rng)
    _, rep = lsqr(A, b, cfg=StoppingConfig("gs", 1e-15, max_iterations=2000), matvec_format=FP16)
    assert rep.termination == "stagnation"
    assert rep.iterations < 2000


def test_ratio_definitions(rng):
    A, b = random_ls(rng)
    assert ratio_gs(A, b, b) == 1.0
    assert ratio_ps(2.0, 4.0, 0.5) == 1.0
    assert ratio_pt(4.0, 1.0, 1.0, 1.0) == 1.0
    assert ratio_pt(4.0, 1.0, 1.0, 1.0, take_sqrt=False) == 2.0
    assert ratio_pt(math.inf, 1.0, 1.0, 1.0) == math.inf


def test_ratio_pt_tracks_true_backward_quantity(rng):
    for _ in range(5):
        A, b = random_ls(rng, 120, 60, kind="sparse")
        D = A.to_dense()
        _, rep = lsqr(A, b, cfg=StoppingConfig("pt", 1e-6), keep_iterates=True)
        assert rep.termination == "converged" and rep.ratio_pt <= 1e-6
        xs = lstsq(A, b)
        denom = np.linalg.norm(D, 2) * np.linalg.norm(rep.y) + np.linalg.norm(b)
        # the estimate refers to an earlier iterate; the final one is no worse
        older = ([np.zeros(A.ncols)] + rep.iterates)[rep.estimate_index]
        true_older = np.linalg.norm(D @ (xs - older)) / denom
        true_final = np.linalg.norm(D @ (xs - rep.y)) / denom
        assert true_older / 2 <= rep.ratio_pt <= 2 * true_older
        assert true_final <= rep.ratio_pt


def test_estimate_norm2(rng):
    assert estimate_norm2(SparseMatrix.from_dense(3.0 * np.eye(5)), maxit=1) == pytest.approx(3.0)
    D = rng.standard_normal((40, 15))
    est = estimate_norm2(SparseMatrix.from_dense(D))
    s = np.linalg.norm(D, 2)
    assert est <= s * (1 + 1e-12) and est >= 0.99 * s


def test_estimator_delay_on_jump():
    est = AdaptiveEstimator()
    for phi in (1.0, 0.5, 0.25):
        est.update(phi)
    ell_before = est.ell
    ell, val = est.update(1e6)
    assert ell == ell_before and val == math.inf


def test_estimator_geometric_sequence():
    # Delta_k = q^k: the tail is exactly Delta_l / (1 - q)
    q = 0.5
    est = AdaptiveEstimator()
    out = [est.update(math.sqrt(q ** k)) for k in range(1, 40)]
    fired = [(ell, e) for ell, e in out if math.isfinite(e)]
    assert fired
    for ell, e in fired:
        true = q ** ell / (1 - q)
        assert (true - e) / true <= 0.25


def test_estimator_contract_lsqr(rng):
    for _ in range(15):
        A, b = random_ls(rng, 60, 25, kind="sparse")
        count, worst = estimator_violations(A, b)
        assert count > 0 and worst <= 0.25


def test_preconditioner_invariance(rng):
    A, b = random_ls(rng, 60, 20, kind="sparse")
    sc = scale_columns(A)
    f = ic_memory_limited(form_normal(sc.B), MemLimits(3, 3))
    xs = lstsq(A, b)
    for M in (IdentityPreconditioner(), ICPreconditioner(f), ICPreconditioner(f, FP32)):
        _, rep = lsqr(sc.B, b, M, StoppingConfig("pt", 1e-12))
        x = sc.S * rep.y
        assert np.linalg.norm(x - xs) <= 1e-6 * np.linalg.norm(xs)


def test_preconditioning_reduces_iterations(rng):
    D = rng.standard_normal((80, 30)) * np.logspace(0, 4, 30)
    A = SparseMatrix.from_dense(D)
    b = rng.uniform(-1, 1, 80)
    _, plain = lsqr(A, b, cfg=StoppingConfig("pt", 1e-10))
    sc = scale_columns(A)
    f = ic_memory_limited(form_normal(sc.B), MemLimits.unlimited(30))
    _, prec = lsqr(sc.B, b, ICPreconditioner(f), StoppingConfig("pt", 1e-10))
    assert prec.iterations <= 5 < plain.iterations


def test_fp16_apply_breakdown_is_reported():
    L = SparseMatrix.from_dense(np.array([[1e-3, 0.0], [0.0, 1.0]]))
    A = SparseMatrix.from_dense(np.array([[100.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
    _, rep = lsqr(A, np.array([600.0, 1.0, 1.0]), ICPreconditioner(L, FP16))
    assert rep.termination == "apply_breakdown"
    assert not rep.converged


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2 ** 31))
def test_converged_pt_implies_ratio_below_delta(n, seed):
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((n + 5, n))
    _, rep = lsqr(SparseMatrix.from_dense(D), rng.standard_normal(n + 5),
                  cfg=StoppingConfig("pt", 1e-9))
    if rep.termination == "converged":
        assert rep.ratio_pt <= 1e-9
