"""Preconditioned LSQR, its stopping rules and error estimation."""

from .lsqr import IterRecord, SolveReport, StoppingConfig, TERMINATIONS, lsqr
from .preconditioner import ICPreconditioner, IdentityPreconditioner, Preconditioner
from .reorth import Basis, ReorthPolicy, reorthogonalize
from .stopping import (AdaptiveEstimator, adaptive_estimate, estimate_norm2, ratio_gs, ratio_ps,
                       ratio_pt)

__all__ = [
    "AdaptiveEstimator", "Basis", "ICPreconditioner", "IdentityPreconditioner", "IterRecord",
    "Preconditioner", "ReorthPolicy", "SolveReport", "StoppingConfig", "TERMINATIONS",
    "adaptive_estimate", "estimate_norm2", "lsqr", "ratio_gs", "ratio_pt", "ratio_ps",
    "reorthogonalize",
]
