"""Emulated IEEE floating-point formats on top of fp64 storage.

Values are always held as ``float64`` arrays; a format only constrains which
values can appear. Every rounding is round-to-nearest-even, with gradual
underflow (subnormals are kept) and overflow to signed infinity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np

ArrayLike = Union[float, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class FpFormat:
    """Binary floating-point format described by its bit budget.

    ``significand_bits`` counts the implicit leading bit, so fp16 has 11.
    """

    name: str
    significand_bits: int
    exponent_bits: int
    dtype: Optional[np.dtype] = field(default=None, compare=False, repr=False)

    @property
    def emax(self) -> int:
        return 2 ** (self.exponent_bits - 1) - 1

    @property
    def emin(self) -> int:
        return 1 - self.emax

    @property
    def unit_roundoff(self) -> float:
        return 2.0 ** (-self.significand_bits)

    @property
    def x_min_normal(self) -> float:
        return 2.0 ** self.emin

    @property
    def x_min_subnormal(self) -> float:
        return 2.0 ** (self.emin - self.significand_bits + 1)

    @property
    def x_max(self) -> float:
        return (2.0 - 2.0 ** (1 - self.significand_bits)) * 2.0 ** self.emax

    @property
    def is_working(self) -> bool:
        """True for fp64, where rounding is the identity."""
        return self.significand_bits >= 53 and self.exponent_bits >= 11

    def __str__(self) -> str:
        return self.name


FP16 = FpFormat("fp16", 11, 5, np.dtype(np.float16))
FP32 = FpFormat("fp32", 24, 8, np.dtype(np.float32))
FP64 = FpFormat("fp64", 53, 11, np.dtype(np.float64))
# Pluggable but untested: no fp16-style native dtype, uses the generic path.
BF16 = FpFormat("bf16", 8, 8)

FORMATS = {f.name: f for f in (FP16, FP32, FP64)}


def get_format(fmt: Union[str, FpFormat]) -> FpFormat:
    """Look up a format by name ("fp16", "fp32", "fp64") or pass one through."""
    if isinstance(fmt, FpFormat):
        return fmt
    try:
        return FORMATS[fmt]
    except KeyError:
        raise ValueError(f"unknown format {fmt!r}; expected one of {sorted(FORMATS)}") from None


@dataclass
class FpFlags:
    """Sticky exception flags, OR-ed together by the rounding routines."""

    overflow: bool = False
    underflow: bool = False
    subnormal: bool = False

    def merge(self, other: "FpFlags") -> None:
        self.overflow |= other.overflow
        self.underflow |= other.underflow
        self.subnormal |= other.subnormal


@dataclass(frozen=True)
class ConversionAudit:
    """What happened to a batch of values squeezed into a narrower format."""

    total: int = 0
    underflowed_to_zero: int = 0
    became_subnormal: int = 0
    overflowed: int = 0
    subnormals_kept: bool = True


def _round_generic(fmt: FpFormat, x: np.ndarray) -> np.ndarray:
    # quantum of the binade containing x, clamped at the subnormal spacing
    _, e = np.frexp(x)
    e = np.maximum(e - 1, fmt.emin)
    quantum = np.ldexp(1.0, e - (fmt.significand_bits - 1))
    y = np.round(x / quantum) * quantum
    return np.where(np.abs(y) > fmt.x_max, np.copysign(np.inf, x), y)


def _round_array(fmt: FpFormat, x: np.ndarray) -> np.ndarray:
    if fmt.is_working:
        return x
    if fmt.dtype is not None:
        with np.errstate(over="ignore"):
            return x.astype(fmt.dtype).astype(np.float64)
    finite = np.isfinite(x)
    out = x.copy()
    out[finite] = _round_generic(fmt, x[finite])
    return out


def _update_flags(fmt: FpFormat, x: np.ndarray, y: np.ndarray, flags: FpFlags) -> None:
    flags.overflow |= bool(np.any(np.isinf(y) & np.isfinite(x)))
    flags.underflow |= bool(np.any((y == 0) & (x != 0)))
    ay = np.abs(y)
    flags.subnormal |= bool(np.any((ay > 0) & (ay < fmt.x_min_normal)))


def round_to(fmt: Union[str, FpFormat], x: ArrayLike, flags: Optional[FpFlags] = None):
    """Round ``x`` to the nearest value of ``fmt`` (ties to even), as fp64.

    Scalars come back as Python floats, arrays as ``float64`` arrays. When a
    ``flags`` object is supplied, overflow/underflow/subnormal events are
    recorded on it.
    """
    fmt = get_format(fmt)
    scalar = np.ndim(x) == 0
    arr = np.asarray(x, dtype=np.float64)
    assert not np.any(np.isnan(arr)), "NaN input to round_to"
    y = _round_array(fmt, np.atleast_1d(arr))
    if flags is not None and not fmt.is_working:
        _update_flags(fmt, np.atleast_1d(arr), y, flags)
    return float(y[0]) if scalar else y.reshape(arr.shape)


def fma_rounded(fmt: Union[str, FpFormat], acc: ArrayLike, a: ArrayLike, b: ArrayLike,
                flags: Optional[FpFlags] = None):
    """Return ``fl(acc - fl(a*b))``: multiply, then subtract, each rounded.

    This is not a fused operation; it is the elementary update of a Cholesky
    column with per-operation rounding.
    """
    fmt = get_format(fmt)
    with np.errstate(over="ignore", invalid="ignore"):
        prod = round_to(fmt, np.multiply(a, b), flags)
        return round_to(fmt, np.subtract(acc, prod), flags)


def squeeze_values(fmt: Union[str, FpFormat], values: Iterable[float]) -> Tuple[np.ndarray, ConversionAudit]:
    """Convert values to ``fmt`` and count what was lost on the way."""
    fmt = get_format(fmt)
    x = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.float64)
    y = round_to(fmt, x) if x.size else x.copy()
    ay = np.abs(y)
    audit = ConversionAudit(
        total=int(x.size),
        underflowed_to_zero=int(np.count_nonzero((y == 0) & (x != 0))),
        became_subnormal=int(np.count_nonzero((ay > 0) & (ay < fmt.x_min_normal))),
        overflowed=int(np.count_nonzero(np.isinf(y) & np.isfinite(x))),
    )
    return y, audit
