"""Pair-number statistics of a pulsed down-conversion source."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

SUM_TOL = 1e-9
TAIL_TOL = 1e-12
MAX_TRUNCATION = 40

SourceKind = Literal["poisson", "thermal"]


@dataclass(frozen=True)
class PhotonNumberDistribution:
    """Probability vector over photon numbers 0..N.

    ``signed=True`` marks the output of a direct loss inversion, which may
    carry small negative entries but still sums to one.
    """

    probs: np.ndarray
    signed: bool = False
    normalized: bool = True

    def __post_init__(self):
        p = np.array(self.probs, dtype=float, copy=True)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probs must be a non-empty 1-d vector")
        if not np.all(np.isfinite(p)):
            raise ValueError("probs must be finite")
        if not self.signed and np.any(p < -SUM_TOL):
            raise ValueError(f"negative probability {p.min():.3g} in unsigned distribution")
        if self.normalized and abs(p.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"probabilities sum to {p.sum():.12g}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def truncation(self) -> int:
        return self.probs.size - 1

    def __len__(self):
        return self.probs.size

    def __getitem__(self, n):
        return self.probs[n]

    def mean(self) -> float:
        return float(np.arange(self.probs.size) @ self.probs)

    def padded(self, N: int) -> np.ndarray:
        """Copy of the vector zero-padded or cut to length N+1."""
        out = np.zeros(N + 1)
        m = min(N + 1, self.probs.size)
        out[:m] = self.probs[:m]
        return out

    @classmethod
    def point_mass(cls, n: int, N: int | None = None) -> "PhotonNumberDistribution":
        N = n if N is None else N
        p = np.zeros(N + 1)
        p[n] = 1.0
        return cls(p)


@dataclass(frozen=True)
class PumpCalibration:
    """Linear map from pump power (uW) to mean pairs per pulse."""

    slope: float
    power: float = 1.0

    def __post_init__(self):
        if self.slope < 0 or self.power < 0:
            raise ValueError("slope and power must be non-negative")

    @property
    def mean_pairs(self) -> float:
        return self.slope * self.power


@dataclass(frozen=True)
class SourceModel:
    kind: SourceKind = "poisson"
    mean_pairs: float = 0.1

    def __post_init__(self):
        if self.kind not in ("poisson", "thermal"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if not (self.mean_pairs >= 0 and math.isfinite(self.mean_pairs)):
            raise ValueError(f"mean_pairs must be finite and >= 0, got {self.mean_pairs}")

    @classmethod
    def from_pump(cls, calibration: PumpCalibration, kind: SourceKind = "poisson") -> "SourceModel":
        return cls(kind=kind, mean_pairs=calibration.mean_pairs)


def pair_pmf(model: SourceModel, n) -> np.ndarray | float:
    """Probability of emitting exactly ``n`` pairs in one pump pulse.

    Accepts a scalar or an integer array.
    """
    n_arr = np.asarray(n)
    if np.any(n_arr < 0):
        raise ValueError("photon number must be >= 0")
    mu = model.mean_pairs
    nf = n_arr.astype(float)
    if model.kind == "poisson":
        if mu == 0:
            out = (n_arr == 0).astype(float)
        else:
            out = np.exp(nf * math.log(mu) - mu - gammaln(nf + 1))
    else:
        if mu == 0:
            out = (n_arr == 0).astype(float)
        else:
            out = np.exp(nf * math.log(mu) - (nf + 1) * math.log1p(mu))
    return float(out) if out.ndim == 0 else out


def tail_mass(model: SourceModel, N: int) -> float:
    """Probability of more than N pairs."""
    mu = model.mean_pairs
    if mu == 0:
        return 0.0
    if model.kind == "poisson":
        return float(poisson.sf(N, mu))
    return float((mu / (1 + mu)) ** (N + 1))


def auto_truncation(model: SourceModel, tol: float = TAIL_TOL, cap: int = MAX_TRUNCATION) -> int:
    """Smallest N whose tail mass is below ``tol``, capped at ``cap``."""
    for N in range(cap + 1):
        if tail_mass(model, N) < tol:
            return N
    return cap


def pair_distribution(model: SourceModel, N: int | None = None, tol: float = TAIL_TOL) -> PhotonNumberDistribution:
    """Pair-number distribution truncated at N and renormalized.

    Signal and idler carry the same pair count, so this is the true photon
    number distribution of either arm.
    """
    if N is None:
        N = auto_truncation(model, tol)
    tail = tail_mass(model, N)
    if tail >= tol:
        raise ValueError(f"truncation N={N} leaves tail mass {tail:.3e} >= {tol:.0e}")
    p = pair_pmf(model, np.arange(N + 1))
    return PhotonNumberDistribution(p / p.sum())


def sample_pair_count(model: SourceModel, rng: np.random.Generator, size=None):
    """Draw pair counts; ``size=None`` returns a single int."""
    mu = model.mean_pairs
    if model.kind == "poisson":
        out = rng.poisson(mu, size)
    else:
        # numpy's geometric counts trials to first success, starting at 1
        out = rng.geometric(1.0 / (1.0 + mu), size) - 1
    return int(out) if size is None else out.astype(np.int64)
