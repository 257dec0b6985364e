"""Forward model of a photon-number-resolving VLPC.

A detection chain is: binomial loss, additive Poisson dark counts, optional
dead-spot thinning, then pulse-height synthesis through a noisy
multiplication gain. The matrix forms of the first two stages live here too
so that simulation and reconstruction share one definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import comb, gammaln


@dataclass(frozen=True)
class DeadSpot:
    """Dead-spot geometry in micrometres."""

    beam_sigma: float
    active_diameter: float = 1000.0
    spot_diameter: float = 5.0

    def __post_init__(self):
        if not self.beam_sigma > 0:
            raise ValueError(f"beam_sigma must be > 0, got {self.beam_sigma}")
        if not (self.active_diameter > 0 and self.spot_diameter > 0):
            raise ValueError("active and spot diameters must be > 0")


@dataclass(frozen=True)
class DetectorConfig:
    efficiency: float = 0.58
    dark_mean: float = 0.01
    gain: float = 1.0
    excess_noise: float = 1.03
    baseline_sigma: float = 0.15
    deadspot: Optional[DeadSpot] = None

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"efficiency must lie in [0, 1], got {self.efficiency}")
        if not self.dark_mean >= 0:
            raise ValueError(f"dark_mean must be >= 0, got {self.dark_mean}")
        if not self.gain > 0:
            raise ValueError(f"gain must be > 0, got {self.gain}")
        if not self.excess_noise >= 1:
            raise ValueError(f"excess_noise must be >= 1, got {self.excess_noise}")
        if not self.baseline_sigma >= 0:
            raise ValueError(f"baseline_sigma must be >= 0, got {self.baseline_sigma}")

    def peak_sigma(self, k):
        """Standard deviation of the k-photon pulse-height peak."""
        k = np.asarray(k, dtype=float)
        var = self.baseline_sigma**2 + k * (self.excess_noise - 1.0) * self.gain**2
        return np.sqrt(var)

    @classmethod
    def ideal(cls, efficiency: float = 1.0) -> "DetectorConfig":
        """Noise-free gain, no darks, no baseline noise."""
        return cls(efficiency=efficiency, dark_mean=0.0, excess_noise=1.0, baseline_sigma=0.0)


def apply_loss(n_true, efficiency: float, rng: np.random.Generator):
    """Binomial thinning of the incident photon number."""
    return rng.binomial(n_true, efficiency)


def add_dark(k, dark_mean: float, rng: np.random.Generator):
    """Add Poisson dark counts collected in the same pulse window."""
    k = np.asarray(k)
    if dark_mean == 0:
        return k.copy() if k.ndim else int(k)
    out = k + rng.poisson(dark_mean, k.shape)
    return out if k.ndim else int(out)


def deadspot_thinning(k: int, geometry: DeadSpot, rng: np.random.Generator) -> int:
    """Sequentially land ``k`` photons and discard those hitting a dead spot.

    Positions are Gaussian around the detector centre, resampled until they
    fall on the active area. A photon closer than one spot diameter to an
    earlier surviving hit is lost.
    """
    if geometry.beam_sigma <= 0:
        raise ValueError("beam_sigma must be > 0")
    if k < 2:
        return int(k)
    r_active = geometry.active_diameter / 2
    hits = np.empty((k, 2))
    n_hits = 0
    for _ in range(k):
        while True:
            pos = rng.normal(0.0, geometry.beam_sigma, 2)
            if pos @ pos <= r_active * r_active:
                break
        if n_hits:
            d2 = np.sum((hits[:n_hits] - pos) ** 2, axis=1)
            if np.any(d2 < geometry.spot_diameter**2):
                continue
        hits[n_hits] = pos
        n_hits += 1
    return n_hits


def thin_counts(k: np.ndarray, geometry: DeadSpot, rng: np.random.Generator) -> np.ndarray:
    """Vector form of :func:`deadspot_thinning`; only multi-photon entries draw."""
    out = np.array(k, copy=True)
    for i in np.flatnonzero(out >= 2):
        out[i] = deadspot_thinning(int(out[i]), geometry, rng)
    return out


def pulse_height(k, cfg: DetectorConfig, rng: np.random.Generator):
    """Integrated pulse height for ``k`` detected photons.

    Per-photon gains are independent with variance (F-1)G^2, so the k-photon
    peak is Gaussian with mean kG and variance sigma0^2 + k(F-1)G^2.
    """
    k_arr = np.asarray(k)
    if np.any(k_arr < 0):
        raise ValueError("detected count must be >= 0")
    out = rng.normal(k_arr * cfg.gain, cfg.peak_sigma(k_arr))
    return float(out) if k_arr.ndim == 0 else out


def detect(n_true, cfg: DetectorConfig, rng: np.random.Generator):
    """Run the full chain; returns (detected count, pulse height)."""
    k = apply_loss(n_true, cfg.efficiency, rng)
    k = add_dark(k, cfg.dark_mean, rng)
    if cfg.deadspot is not None:
        if np.ndim(k):
            k = thin_counts(k, cfg.deadspot, rng)
        else:
            k = deadspot_thinning(int(k), cfg.deadspot, rng)
    return k, pulse_height(k, cfg, rng)


@dataclass(frozen=True)
class LossMatrix:
    """Transfer matrix acting on photon-number vectors 0..N.

    ``kind`` is ``"binomial"``, ``"dark"`` or ``"composed"``. Columns index
    the input photon number, rows the output.
    """

    matrix: np.ndarray
    kind: str
    efficiency: Optional[float] = None
    dark_mean: Optional[float] = None

    @property
    def N(self) -> int:
        return self.matrix.shape[0] - 1

    def __matmul__(self, other):
        if isinstance(other, LossMatrix):
            eff = self.efficiency if self.efficiency is not None else other.efficiency
            dark = self.dark_mean if self.dark_mean is not None else other.dark_mean
            return LossMatrix(self.matrix @ other.matrix, "composed", eff, dark)
        return self.matrix @ np.asarray(other)


def loss_matrix(efficiency: float, N: int) -> LossMatrix:
    """L[i, j] = C(j, i) eta^i (1 - eta)^(j - i), upper triangular."""
    if not 0.0 < efficiency <= 1.0:
        raise ValueError(f"loss matrix needs 0 < efficiency <= 1, got {efficiency}")
    if N < 0:
        raise ValueError("N must be >= 0")
    i = np.arange(N + 1)[:, None]
    j = np.arange(N + 1)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        L = comb(j, i) * efficiency**i * (1.0 - efficiency) ** np.maximum(j - i, 0)
    L = np.where(i <= j, L, 0.0)
    return LossMatrix(L, "binomial", efficiency=efficiency)


def dark_matrix(dark_mean: float, N: int) -> LossMatrix:
    """D[i, k] = Poisson(i - k; d) for i >= k, lower triangular.

    Column k loses the Poisson tail beyond N - k to truncation.
    """
    if not dark_mean >= 0:
        raise ValueError(f"dark_mean must be >= 0, got {dark_mean}")
    i = np.arange(N + 1)[:, None]
    k = np.arange(N + 1)[None, :]
    m = i - k
    if dark_mean == 0:
        D = (m == 0).astype(float)
    else:
        mf = np.maximum(m, 0).astype(float)
        D = np.where(m >= 0, np.exp(mf * math.log(dark_mean) - dark_mean - gammaln(mf + 1)), 0.0)
    return LossMatrix(D, "dark", dark_mean=dark_mean)


def forward_matrix(efficiency: float, dark_mean: float, N: int) -> LossMatrix:
    """Composite D @ L: loss first, darks added afterwards."""
    return dark_matrix(dark_mean, N) @ loss_matrix(efficiency, N)
