"""Right preconditioners for LSQR.

LSQR works with ``B M^{-1}``; a preconditioner therefore supplies
``M^{-1} v`` and ``M^{-T} v``. For an incomplete factor ``C ~ L L^T`` the
right preconditioner is ``M = L^T``.
"""

from __future__ import annotations

from typing import Union

import numpy as np

from ..icfact import ICFactor
from ..precision import FP64, FpFormat, get_format, round_to
from ..sparsela import SparseMatrix, solve_lower, solve_upper_t


class Preconditioner:
    """Linear, nonsingular ``M`` applied in ``format``."""

    format: FpFormat = FP64

    def apply_inv(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def apply_inv_t(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class IdentityPreconditioner(Preconditioner):
    def __init__(self, fmt: Union[str, FpFormat] = FP64):
        self.format = get_format(fmt)

    def apply_inv(self, v):
        return round_to(self.format, v)

    def apply_inv_t(self, v):
        return round_to(self.format, v)


class ICPreconditioner(Preconditioner):
    """``M = L^T`` from an incomplete Cholesky factor.

    The factor may live in a narrower format than ``fmt``; its entries are
    representable in any wider format, so they are used as stored.
    """

    def __init__(self, factor: Union[ICFactor, SparseMatrix], fmt: Union[str, FpFormat] = FP64):
        self.L = factor.L if isinstance(factor, ICFactor) else factor
        self.format = get_format(fmt)

    def apply_inv(self, v):
        return solve_upper_t(self.L, v, self.format)

    def apply_inv_t(self, v):
        return solve_lower(self.L, v, self.format)
