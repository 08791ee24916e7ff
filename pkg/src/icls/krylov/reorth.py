"""Reorthogonalization of the Golub-Kahan bases."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import BasisMemoryExceeded

_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class ReorthPolicy:
    """``none``, ``full`` (both bases), ``one-sided`` (P only) or ``partial:K``.

    ``partial:K`` reorthogonalizes both bases against their last ``K`` vectors.
    """

    kind: str = "none"
    depth: Optional[int] = None

    @classmethod
    def parse(cls, text: str) -> "ReorthPolicy":
        text = text.strip().lower()
        if text in ("none", "full", "one-sided"):
            return cls(text)
        if text.startswith("partial:"):
            k = int(text.split(":", 1)[1])
            if k < 0:
                raise ValueError("partial depth must be >= 0")
            return cls("partial", k)
        raise ValueError(f"unknown reorthogonalization policy {text!r}")

    @property
    def on_p(self) -> bool:
        return self.kind != "none"

    @property
    def on_q(self) -> bool:
        return self.kind in ("full", "partial")

    def __str__(self) -> str:
        return f"partial:{self.depth}" if self.kind == "partial" else self.kind


class Basis:
    """Column-appended dense basis with an optional memory cap in bytes."""

    def __init__(self, dim: int, max_bytes: Optional[int] = None):
        self.dim = dim
        self.max_bytes = max_bytes
        self._data = np.empty((dim, 16))
        self.size = 0

    def append(self, v: np.ndarray) -> None:
        if self.max_bytes is not None and (self.size + 1) * self.dim * 8 > self.max_bytes:
            raise BasisMemoryExceeded(
                f"storing {self.size + 1} basis vectors of length {self.dim} exceeds {self.max_bytes} bytes")
        if self.size == self._data.shape[1]:
            self._data = np.concatenate([self._data, np.empty_like(self._data)], axis=1)
        self._data[:, self.size] = v
        self.size += 1

    def last(self, k: Optional[int] = None) -> np.ndarray:
        k = self.size if k is None else min(k, self.size)
        return self._data[:, self.size - k:self.size]


def reorthogonalize(basis: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, float, bool]:
    """One classical Gram-Schmidt pass against orthonormal ``basis`` columns.

    Returns the normalized vector, the norm after projection, and whether the
    vector was (numerically) inside the span -- a lucky breakdown.
    """
    v = np.asarray(v, dtype=np.float64)
    before = float(np.linalg.norm(v))
    if basis.shape[1]:
        v = v - basis @ (basis.T @ v)
    after = float(np.linalg.norm(v))
    lucky = after <= 10 * _EPS * max(before, 1e-300) * max(1, basis.shape[1]) ** 0.5 or after == 0
    if after == 0:
        return v, 0.0, True
    return v / after, after, lucky
