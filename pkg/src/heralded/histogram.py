from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Histogram:
    """Uniformly binned counts starting at ``low``."""

    low: float
    width: float
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if not self.width > 0:
            raise ValueError(f"bin width must be > 0, got {self.width}")
        if c.ndim != 1:
            raise ValueError("counts must be 1-d")
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", c)

    @classmethod
    def empty(cls, low: float, width: float, n_bins: int) -> "Histogram":
        return cls(low, width, np.zeros(n_bins, dtype=np.int64))

    @property
    def n_bins(self) -> int:
        return self.counts.size

    @property
    def edges(self) -> np.ndarray:
        return self.low + self.width * np.arange(self.n_bins + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.low + self.width * (np.arange(self.n_bins) + 0.5)

    @property
    def total(self):
        return self.counts.sum()

    def bin_index(self, x: np.ndarray) -> np.ndarray:
        """Bin of each value, -1 where it falls outside the range."""
        idx = np.floor((np.asarray(x) - self.low) / self.width).astype(np.int64)
        idx[(idx < 0) | (idx >= self.n_bins)] = -1
        return idx

    def fill(self, x: np.ndarray) -> tuple["Histogram", int]:
        """Return a new histogram with ``x`` added, plus the overflow count."""
        idx = self.bin_index(x)
        ok = idx >= 0
        add = np.bincount(idx[ok], minlength=self.n_bins)
        return Histogram(self.low, self.width, self.counts + add), int((~ok).sum())

    def __add__(self, other: "Histogram") -> "Histogram":
        if (self.low, self.width, self.n_bins) != (other.low, other.width, other.n_bins):
            raise ValueError("histograms have different binning")
        return Histogram(self.low, self.width, self.counts + other.counts)
