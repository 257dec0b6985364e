"""Efficiency, fidelity and rate figures of merit, plus the pump-power sweep."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import ndtr
from scipy.stats import binom, poisson

from .detector import DetectorConfig
from .experiment import ExperimentConfig, ScaWindows, run_experiment
from .reconstruct import Mode, reconstruct
from .stats import PhotonNumberDistribution, PumpCalibration, SourceModel, pair_pmf

REFERENCE_RATE_HZ = 11_800.0
REFERENCE_LABEL1_PROB = REFERENCE_RATE_HZ / 45_000.0


@dataclass(frozen=True)
class CoincidenceCounts:
    singles_1: int
    singles_2: int
    coincidences: int
    pulses: int

    def __post_init__(self):
        if min(self.singles_1, self.singles_2, self.coincidences, self.pulses) < 0:
            raise ValueError("counts must be non-negative")
        if self.coincidences > min(self.singles_1, self.singles_2):
            raise ValueError("coincidences exceed singles")
        if max(self.singles_1, self.singles_2) > self.pulses:
            raise ValueError("singles exceed the number of pulses")


class KlyshkoEstimate(NamedTuple):
    eta1: float
    eta2: float
    eta1_corrected: float
    eta2_corrected: float
    accidentals: float
    eta1_stderr: float
    eta2_stderr: float


def klyshko_efficiency(c: CoincidenceCounts, dark_1: float = 0.0, dark_2: float = 0.0) -> KlyshkoEstimate:
    """Absolute efficiencies from coincidences over the partner arm's singles.

    The corrected pair removes dark clicks exactly in expectation: with
    per-pulse dark click probabilities q1, q2, the no-click fractions factor
    into a signal part times (1 - q), which is inverted for the signal-only
    singles and coincidences. ``accidentals`` is the expected dark-dark
    coincidence count q1*q2*pulses. Without darks both pairs coincide.
    """
    if c.singles_1 == 0 or c.singles_2 == 0:
        raise ValueError("Klyshko estimate needs nonzero singles in both arms")
    eta1 = c.coincidences / c.singles_2
    eta2 = c.coincidences / c.singles_1
    q1, q2 = -math.expm1(-dark_1), -math.expm1(-dark_2)
    P = c.pulses
    acc = q1 * q2 * P
    # no-click fractions with the dark contribution divided out
    n1 = (P - c.singles_1) / (1 - q1)
    n2 = (P - c.singles_2) / (1 - q2)
    n12 = (P - c.singles_1 - c.singles_2 + c.coincidences) / ((1 - q1) * (1 - q2))
    s1, s2 = P - n1, P - n2
    cc = P - n1 - n2 + n12
    eta1_c = cc / s2 if s2 > 0 else float("nan")
    eta2_c = cc / s1 if s1 > 0 else float("nan")
    return KlyshkoEstimate(
        eta1,
        eta2,
        eta1_c,
        eta2_c,
        acc,
        math.sqrt(eta1 * (1 - eta1) / c.singles_2),
        math.sqrt(eta2 * (1 - eta2) / c.singles_1),
    )


def trigger_response(trigger: DetectorConfig, m: int, N: int) -> np.ndarray:
    """P(trigger detects m | n pairs) for n = 0..N: binomial loss convolved with Poisson darks."""
    n = np.arange(N + 1)
    k = np.arange(m + 1)
    lik = binom.pmf(k[None, :], n[:, None], trigger.efficiency) * poisson.pmf(m - k[None, :], trigger.dark_mean)
    return lik.sum(axis=1)


def posterior_oracle(model: SourceModel, trigger: DetectorConfig, m: int, N: int) -> PhotonNumberDistribution:
    """Idler photon-number distribution given the trigger detected exactly ``m`` photons.

    Assumes the herald is classified by detected count, not pulse height.
    """
    joint = pair_pmf(model, np.arange(N + 1)) * trigger_response(trigger, m, N)
    total = joint.sum()
    if not total > 0:
        raise ValueError(f"trigger outcome m={m} has zero probability")
    return PhotonNumberDistribution(joint / total)


def window_response(trigger: DetectorConfig, windows: ScaWindows, label: int, N: int, headroom: int = 10) -> np.ndarray:
    """P(herald label | n pairs) when labels come from pulse-height windows.

    Dead-spot thinning is ignored.
    """
    w = next(w for w in windows.windows if w.label == label)
    K = N + headroom
    k = np.arange(K + 1)
    mean = k * trigger.gain
    sig = trigger.peak_sigma(k)
    with np.errstate(divide="ignore", invalid="ignore"):
        hit = ndtr((w.high - mean) / sig) - ndtr((w.low - mean) / sig)
    exact = (w.low <= mean) & (mean < w.high)
    hit = np.where(sig > 0, hit, exact.astype(float))
    det = np.zeros((N + 1, K + 1))
    for m in range(K + 1):
        det[:, m] = trigger_response(trigger, m, N)
    return det @ hit


def herald_response(cfg: ExperimentConfig, label: int, N: int) -> np.ndarray:
    if cfg.classification == "ideal":
        return trigger_response(cfg.trigger, label, N)
    return window_response(cfg.trigger, cfg.windows, label, N)


def label_posterior(cfg: ExperimentConfig, label: int, N: int) -> PhotonNumberDistribution:
    """Posterior over pair number for the herald classification used by ``cfg``."""
    joint = pair_pmf(cfg.source, np.arange(N + 1)) * herald_response(cfg, label, N)
    total = joint.sum()
    if not total > 0:
        raise ValueError(f"herald label {label} has zero probability")
    return PhotonNumberDistribution(joint / total)


def label_probability(cfg: ExperimentConfig, label: int, N: Optional[int] = None) -> float:
    """Per-pulse probability of herald ``label``."""
    if N is None:
        N = max(40, int(cfg.mean_pairs * 6 + 20))
    return float(pair_pmf(cfg.source, np.arange(N + 1)) @ herald_response(cfg, label, N))


class Fidelity(NamedTuple):
    raw: float
    clamped: float


def heralded_fidelity(reconstructed: PhotonNumberDistribution, n: int) -> Fidelity:
    """Probability of exactly ``n`` photons; raw value kept alongside the [0, 1] clamp."""
    raw = float(reconstructed[n]) if n < len(reconstructed) else 0.0
    return Fidelity(raw, min(1.0, max(0.0, raw)))


def generation_rate(label_counts, pulses: int, rep_rate: float = 45_000.0) -> np.ndarray:
    """Heralding rate in Hz for each entry of ``label_counts``."""
    if pulses <= 0:
        raise ValueError("pulses must be > 0")
    return rep_rate * np.asarray(label_counts, dtype=float) / pulses


def calibrate_mean_pairs(cfg: ExperimentConfig, target: float = REFERENCE_LABEL1_PROB, label: int = 1) -> float:
    """Mean pairs per pulse giving herald probability ``target``, on the low-power branch."""
    mu_max = 20.0

    def prob(mu):
        return label_probability(cfg.with_mean_pairs(mu), label)

    peak = minimize_scalar(lambda mu: -prob(mu), bounds=(0.0, mu_max), method="bounded", options={"xatol": 1e-10})
    if -peak.fun < target:
        raise ValueError(f"label-{label} probability never reaches {target:.4f} (max {-peak.fun:.4f})")
    return brentq(lambda mu: prob(mu) - target, 0.0, peak.x, xtol=1e-14)


def calibrate_slope(cfg: ExperimentConfig, reference_power: float, target: float = REFERENCE_LABEL1_PROB) -> PumpCalibration:
    """Pump calibration placing herald-1 probability ``target`` at ``reference_power`` (uW)."""
    mu = calibrate_mean_pairs(cfg, target)
    return PumpCalibration(slope=mu / reference_power, power=reference_power)


@dataclass
class SweepPoint:
    power: float
    mu: float
    seed: int
    label_counts: np.ndarray
    fidelity_signed: dict[int, float]
    fidelity_clamped: dict[int, float]
    fidelity_oracle: dict[int, float]
    rate_hz: dict[int, float]
    rate_stderr: dict[int, float]
    reconstructed: dict[int, Optional[np.ndarray]]
    idler_counts: dict[int, np.ndarray]
    fidelity_window: dict[int, float] = field(default_factory=dict)


@dataclass
class SweepResult:
    points: list[SweepPoint]
    n_values: tuple[int, ...]
    metadata: dict = field(default_factory=dict)

    COLUMNS = ("power", "mu", "n", "fidelity_signed", "fidelity_clamped", "fidelity_oracle", "rate_hz")

    def rows(self):
        for pt in self.points:
            for n in self.n_values:
                yield (pt.power, pt.mu, n, pt.fidelity_signed[n], pt.fidelity_clamped[n], pt.fidelity_oracle[n], pt.rate_hz[n])

    def series(self, attr: str, n: int) -> np.ndarray:
        return np.array([getattr(pt, attr)[n] for pt in self.points])


def _posterior_entry(fn, *args) -> float:
    """Entry n of a posterior, NaN when the herald cannot occur."""
    n = args[-2]
    try:
        return float(fn(*args)[n])
    except ValueError:
        return float("nan")


def point_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1)[0])


def sweep(
    cfg: ExperimentConfig,
    powers: Sequence[float],
    pulses_per_point: int,
    calibration: Optional[PumpCalibration] = None,
    N: int = 12,
    mode: Mode = "signed",
    n_values: Sequence[int] = (1, 2, 3, 4),
    workers: int = 1,
    mus: Optional[Sequence[float]] = None,
) -> SweepResult:
    """Simulate and reconstruct heralded states over a list of pump powers.

    Mean pairs come from ``calibration.slope * power``; passing ``mus``
    bypasses the calibration. Idler distributions are reconstructed from the
    monitor's detected-count tally of each herald label. Labels with no
    heralds give NaN fidelities.

    ``fidelity_oracle`` is the ideal-herald posterior; ``fidelity_window``
    is the posterior under the configured classification, which differs
    from it when pulse-height windows misassign neighbouring peaks.
    """
    if mus is None:
        if calibration is None:
            raise ValueError("sweep needs a pump calibration or explicit mean pair numbers")
        mus = [calibration.slope * p for p in powers]
    if len(mus) != len(powers) or not len(powers):
        raise ValueError("powers must be a non-empty list matching mus")
    n_values = tuple(n_values)
    points = []
    for i, (power, mu) in enumerate(zip(powers, mus)):
        seed = point_seed(cfg.seed, i)
        run_cfg = replace(cfg.with_mean_pairs(mu), num_pulses=pulses_per_point, seed=seed)
        res = run_experiment(run_cfg, workers=workers)
        rates = generation_rate(res.label_counts, pulses_per_point, cfg.rep_rate)
        pt = SweepPoint(power, mu, seed, res.label_counts, {}, {}, {}, {}, {}, {}, {})
        for n in n_values:
            count = int(res.label_counts[n])
            tally = res.idler_counts(n)
            pt.idler_counts[n] = tally
            pt.rate_hz[n] = float(rates[n])
            prob = count / pulses_per_point
            pt.rate_stderr[n] = cfg.rep_rate * math.sqrt(prob * (1 - prob) / pulses_per_point)
            pt.fidelity_oracle[n] = _posterior_entry(posterior_oracle, run_cfg.source, cfg.trigger, n, N)
            pt.fidelity_window[n] = _posterior_entry(label_posterior, run_cfg, n, N)
            if count == 0:
                pt.reconstructed[n] = None
                pt.fidelity_signed[n] = pt.fidelity_clamped[n] = float("nan")
                continue
            f = tally[: N + 1] / count
            p = reconstruct(f, cfg.monitor.efficiency, cfg.monitor.dark_mean, N, mode)
            pt.reconstructed[n] = p.probs
            fid = heralded_fidelity(p, n)
            pt.fidelity_signed[n], pt.fidelity_clamped[n] = fid.raw, fid.clamped
        points.append(pt)
    meta = {
        "seed": cfg.seed,
        "point_seeds": [pt.seed for pt in points],
        "pulses_per_point": pulses_per_point,
        "truncation": N,
        "mode": mode,
        "classification": cfg.classification,
        "calibration": None if calibration is None else {"slope_per_uW": calibration.slope, "reference_power_uW": calibration.power},
    }
    return SweepResult(points, n_values, meta)
