import numpy as np
import pytest
from hypothesis import given, strategies as st

from icls.precision import (FP16, FP32, FP64, ConversionAudit, FpFlags, fma_rounded, get_format,
                            round_to, squeeze_values)
from half_oracle import half_oracle


def test_fp16_parameters():
    assert FP16.significand_bits == 11 and FP16.exponent_bits == 5
    assert float(f"{FP16.unit_roundoff:.3g}") == 4.88e-4
    assert float(f"{FP16.x_min_subnormal:.3g}") == 5.96e-8
    assert float(f"{FP16.x_min_normal:.3g}") == 6.10e-5
    assert FP16.x_max == 65504.0


def test_fp32_fp64_parameters():
    assert FP32.unit_roundoff == 2.0 ** -24
    assert FP32.x_max == float(np.finfo(np.float32).max)
    assert FP32.x_min_normal == float(np.finfo(np.float32).tiny)
    assert FP64.unit_roundoff == 2.0 ** -53
    assert FP64.x_max == np.finfo(np.float64).max
    assert FP64.x_min_subnormal == 5e-324


def test_get_format():
    assert get_format("fp32") is FP32
    assert get_format(FP16) is FP16
    with pytest.raises(ValueError):
        get_format("fp8")


def test_round_examples():
    assert round_to(FP16, 1.0 + 2.0 ** -11) == 1.0  # tie to even
    assert round_to(FP16, 1.0 + 3 * 2.0 ** -11) == 1.0 + 2.0 ** -9
    assert round_to(FP16, 65520.0) == np.inf
    assert round_to(FP16, 65519.0) == 65504.0
    assert round_to(FP16, 2.0e-8) == 0.0
    flags = FpFlags()
    round_to(FP16, 2.0e-8, flags)
    assert flags.underflow
    # above half the smallest subnormal, so it rounds up to it
    assert round_to(FP16, 3.0e-8) == FP16.x_min_subnormal
    assert round_to(FP64, 0.1) == 0.1


def test_round_array_matches_oracle(rng):
    x = rng.uniform(-1, 1, 1000)
    np.testing.assert_array_equal(round_to(FP16, x), half_oracle(x))


def test_flags():
    f = FpFlags()
    round_to(FP16, np.array([1e5, 1e-9, 1e-6]), f)
    assert f.overflow and f.underflow and f.subnormal
    g = FpFlags()
    round_to(FP16, 1.0, g)
    assert not (g.overflow or g.underflow or g.subnormal)
    g.merge(f)
    assert g.overflow


def test_fma_rounded_is_two_roundings():
    acc, a, b = 1.0, 1.0 + 2.0 ** -10, 2.0 ** -12
    expected = round_to(FP16, acc - round_to(FP16, a * b))
    assert fma_rounded(FP16, acc, a, b) == expected


@given(st.floats(-7e4, 7e4, allow_nan=False))
def test_round_idempotent(x):
    y = round_to(FP16, x)
    assert round_to(FP16, y) == y or np.isinf(y)


@given(st.floats(-6e4, 6e4, allow_nan=False), st.floats(-6e4, 6e4, allow_nan=False))
def test_round_monotone(x, y):
    if x <= y:
        assert round_to(FP16, x) <= round_to(FP16, y)


@given(st.floats(-1e30, 1e30, allow_nan=False))
def test_fp32_matches_numpy(x):
    assert round_to(FP32, x) == float(np.float32(x))


def test_squeeze_identity_fp64(rng):
    v = rng.standard_normal(50)
    out, audit = squeeze_values(FP64, v)
    np.testing.assert_array_equal(out, v)
    assert audit == ConversionAudit(total=50)


def test_squeeze_audit_matches_classification(rng):
    v = np.exp(rng.uniform(np.log(1e-9), np.log(1e-3), 10_000))
    out, audit = squeeze_values(FP16, v)
    # direct classification against the format thresholds
    to_zero = int(np.sum(v <= FP16.x_min_subnormal / 2))
    sub = int(np.sum((v > FP16.x_min_subnormal / 2) & (out < FP16.x_min_normal)))
    assert audit.total == 10_000
    assert audit.underflowed_to_zero == to_zero
    assert audit.became_subnormal == sub
    assert audit.overflowed == 0
    assert audit.subnormals_kept
