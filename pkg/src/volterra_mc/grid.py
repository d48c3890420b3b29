from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class TimeGrid:
    """Regular mesh t_k = k T / n of [0, T]."""

    n: int
    T: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"grid size n must be a positive integer, got {self.n!r}")
        if not (self.T > 0 and np.isfinite(self.T)):
            raise DomainError(f"horizon T must be positive, got {self.T!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "T", float(self.T))

    @property
    def h(self) -> float:
        return self.T / self.n

    @property
    def times(self) -> np.ndarray:
        # k * T / n rather than k * h keeps t_n == T exactly
        return np.arange(self.n + 1) * self.T / self.n

    def t(self, k: int) -> float:
        return k * self.T / self.n

    def locate(self, t: float) -> int:
        """Index k with t in [t_k, t_{k+1}), clamped so that t = T maps to n."""
        if not 0.0 <= t <= self.T:
            raise DomainError(f"time {t} outside [0, {self.T}]")
        k = int(np.floor(t * self.n / self.T))
        return min(k, self.n)

    def is_refined_by(self, other: "TimeGrid") -> bool:
        return self.T == other.T and other.n % self.n == 0

    def to_dict(self) -> dict:
        return {"n": self.n, "T": self.T}
