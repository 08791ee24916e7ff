"""Incomplete Cholesky factorizations of normal matrices."""

from .core import B3Check, ICFactor, ic_level, ic_memory_limited
from .guard import (BreakdownEvent, MemLimits, RowMax, ShiftPolicy, b3_bound, b3_safe,
                    next_shift)
from .levels import LevelPattern, symbolic_levels

__all__ = [
    "B3Check", "BreakdownEvent", "ICFactor", "LevelPattern", "MemLimits", "RowMax",
    "ShiftPolicy", "b3_bound", "b3_safe", "ic_level", "ic_memory_limited", "next_shift",
    "symbolic_levels",
]
