"""Hyper-rectangle design domains."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned box {x : lo <= x <= hi}, the feasible design set."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lo and hi must be 1-D arrays of equal length")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("bounds must be finite")
        if not (lo < hi).all():
            raise ValueError("need lo < hi in every dimension")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_pairs(cls, pairs) -> "Bounds":
        pairs = [(float(a), float(b)) for a, b in pairs]
        return cls(np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))

    @classmethod
    def unit_box(cls, n_dim: int) -> "Bounds":
        return cls(np.zeros(n_dim), np.ones(n_dim))

    @property
    def n_dim(self) -> int:
        return self.lo.size

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool((x >= self.lo - tol).all() and (x <= self.hi + tol).all())

    def project(self, x) -> np.ndarray:
        """Euclidean projection onto the box (componentwise clip)."""
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * rng.random(self.n_dim)

    def pairs(self):
        return [(float(a), float(b)) for a, b in zip(self.lo, self.hi)]
