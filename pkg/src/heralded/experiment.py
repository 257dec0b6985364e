"""Pulse-by-pulse Monte Carlo of the heralding apparatus.

One pump pulse makes ``n`` pairs. The signal arm goes to the trigger
detector, whose pulse height is classified by single-channel-analyzer
windows; the idler arm goes to the monitor detector, read out as a pulse
area. Both chains see the same ``n`` but draw independently.

Pulses are simulated in fixed-size blocks, each with its own seed derived
from ``(seed, block_index)``. Block results merge by addition, so the
outcome does not depend on how blocks are spread over worker processes.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal, Optional

import numpy as np

from .detector import DetectorConfig, add_dark, apply_loss, pulse_height, thin_counts, detect
from .histogram import Histogram
from .stats import PumpCalibration, SourceModel, sample_pair_count

BLOCK_SIZE = 1 << 16
MAX_COUNT = 40  # count tables clip detected photon numbers here
LAB_REP_RATE = 45_000.0

Classification = Literal["pulse_height", "ideal"]


class WindowError(ValueError):
    pass


@dataclass(frozen=True)
class Window:
    label: int
    low: float
    high: float


@dataclass(frozen=True)
class ScaWindows:
    """Sorted, disjoint half-open pulse-height windows [low, high)."""

    windows: tuple[Window, ...]

    def __post_init__(self):
        ws = tuple(self.windows)
        object.__setattr__(self, "windows", ws)
        for w in ws:
            if not w.low < w.high:
                raise WindowError(f"window {w.label}: low {w.low} >= high {w.high}")
        for a, b in zip(ws, ws[1:]):
            if a.high > b.low:
                raise WindowError(f"windows {a.label} and {b.label} overlap")
        labels = [w.label for w in ws]
        if len(set(labels)) != len(labels) or any(n < 1 for n in labels):
            raise WindowError("window labels must be distinct positive integers")

    @classmethod
    def from_list(cls, rows) -> "ScaWindows":
        ws = sorted((Window(int(n), float(lo), float(hi)) for n, lo, hi in rows), key=lambda w: w.low)
        return cls(tuple(ws))

    @property
    def labels(self) -> list[int]:
        return [w.label for w in self.windows]

    @property
    def n_max(self) -> int:
        return max(self.labels)

    def classify(self, heights) -> np.ndarray:
        """Label of the window containing each height; 0 where none does."""
        h = np.atleast_1d(np.asarray(heights, dtype=float))
        lows = np.array([w.low for w in self.windows])
        highs = np.array([w.high for w in self.windows])
        labels = np.array(self.labels, dtype=np.int64)
        idx = np.searchsorted(lows, h, side="right") - 1
        safe = np.clip(idx, 0, None)
        inside = (idx >= 0) & (h < highs[safe])
        return np.where(inside, labels[safe], 0)


def default_windows(cfg: DetectorConfig, n_max: int = 4) -> ScaWindows:
    """Windows centred on nG with half-width min(G/2, 3 sigma_n).

    A noise-free peak (sigma_n = 0) gets the full half-width G/2. A peak wider than G/2 cannot be separated from its neighbours; asking
    for a window there raises :class:`WindowError`.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    G = cfg.gain
    rows = []
    for n in range(1, n_max + 1):
        sigma = float(cfg.peak_sigma(n))
        if sigma > G / 2:
            raise WindowError(
                f"peak {n} has sigma {sigma:.3g} > G/2 = {G / 2:.3g}; windows up to n_max={n_max} would overlap"
            )
        half = min(G / 2, 3 * sigma) if sigma > 0 else G / 2
        rows.append((n, n * G - half, n * G + half))
    return ScaWindows.from_list(rows)


@dataclass(frozen=True)
class HistogramSpec:
    """Binning in units of detector gain: [low, high) with bins_per_gain bins per G."""

    low: float = -1.0
    high: float = 12.0
    bins_per_gain: int = 50

    def make(self, gain: float) -> Histogram:
        n_bins = int(round((self.high - self.low) * self.bins_per_gain))
        return Histogram.empty(self.low * gain, gain / self.bins_per_gain, n_bins)


@dataclass(frozen=True)
class ExperimentConfig:
    source: SourceModel = field(default_factory=SourceModel)
    trigger: DetectorConfig = field(default_factory=lambda: DetectorConfig(efficiency=0.68))
    monitor: DetectorConfig = field(default_factory=lambda: DetectorConfig(efficiency=0.58))
    windows: Optional[ScaWindows] = None
    n_max: int = 4
    num_pulses: int = 100_000
    rep_rate: float = LAB_REP_RATE
    seed: int = 0
    pump: Optional[PumpCalibration] = None
    classification: Classification = "pulse_height"
    histogram: HistogramSpec = field(default_factory=HistogramSpec)

    def __post_init__(self):
        if self.num_pulses < 0:
            raise ValueError("num_pulses must be >= 0")
        if self.classification not in ("pulse_height", "ideal"):
            raise ValueError(f"unknown classification {self.classification!r}")
        if self.pump is not None:
            object.__setattr__(self, "source", SourceModel.from_pump(self.pump, self.source.kind))
        if self.windows is None:
            object.__setattr__(self, "windows", default_windows(self.trigger, self.n_max))
        else:
            object.__setattr__(self, "n_max", self.windows.n_max)

    @property
    def mean_pairs(self) -> float:
        return self.source.mean_pairs

    def with_mean_pairs(self, mu: float) -> "ExperimentConfig":
        return replace(self, source=replace(self.source, mean_pairs=mu), pump=None)

    def classify(self, detected, heights) -> np.ndarray:
        if self.classification == "ideal":
            d = np.atleast_1d(detected)
            return np.where((d >= 1) & (d <= self.n_max), d, 0)
        return self.windows.classify(heights)


@dataclass(frozen=True)
class PulseRecord:
    true_pairs: int
    trigger_detected: int
    trigger_height: float
    trigger_label: Optional[int]
    idler_detected: int
    idler_area: float


def run_pulse(cfg: ExperimentConfig, rng: np.random.Generator) -> PulseRecord:
    """Simulate a single pump pulse."""
    n = sample_pair_count(cfg.source, rng)
    k1, h1 = detect(n, cfg.trigger, rng)
    k2, h2 = detect(n, cfg.monitor, rng)
    label = int(cfg.classify(k1, h1)[0])
    return PulseRecord(n, int(k1), float(h1), label or None, int(k2), float(h2))


@dataclass
class RecordBatch:
    """Column-oriented pulse records; label 0 means unlabelled."""

    true_pairs: np.ndarray
    trigger_detected: np.ndarray
    trigger_height: np.ndarray
    trigger_label: np.ndarray
    idler_detected: np.ndarray
    idler_area: np.ndarray

    COLUMNS = ("true_pairs", "trigger_detected", "trigger_height", "trigger_label", "idler_detected", "idler_area")

    def __len__(self):
        return self.true_pairs.size

    @classmethod
    def concat(cls, batches: list["RecordBatch"]) -> "RecordBatch":
        if not batches:
            z = np.zeros(0, dtype=np.int64)
            return cls(z, z, np.zeros(0), z, z, np.zeros(0))
        return cls(*(np.concatenate([getattr(b, c) for b in batches]) for c in cls.COLUMNS))

    def record(self, i: int) -> PulseRecord:
        lab = int(self.trigger_label[i])
        return PulseRecord(
            int(self.true_pairs[i]),
            int(self.trigger_detected[i]),
            float(self.trigger_height[i]),
            lab or None,
            int(self.idler_detected[i]),
            float(self.idler_area[i]),
        )


@dataclass
class ExperimentResult:
    """Merged tallies of a run.

    Count tables are indexed by photon number clipped at ``MAX_COUNT``;
    label index 0 collects unlabelled pulses.
    """

    num_pulses: int
    n_max: int
    label_counts: np.ndarray
    trigger_hist: Histogram
    idler_hist: Histogram
    idler_hist_by_label: dict[int, Histogram]
    joint_counts: np.ndarray  # [trigger_detected, idler_detected]
    label_idler_counts: np.ndarray  # [label, idler_detected]
    label_true_counts: np.ndarray  # [label, true_pairs]
    overflow: int = 0
    records: Optional[RecordBatch] = None

    @property
    def labels(self) -> list[int]:
        return list(range(1, self.n_max + 1))

    def merge(self, other: "ExperimentResult") -> "ExperimentResult":
        """Add tallies; records are not carried over."""
        return ExperimentResult(
            self.num_pulses + other.num_pulses,
            self.n_max,
            self.label_counts + other.label_counts,
            self.trigger_hist + other.trigger_hist,
            self.idler_hist + other.idler_hist,
            {n: self.idler_hist_by_label[n] + other.idler_hist_by_label[n] for n in self.idler_hist_by_label},
            self.joint_counts + other.joint_counts,
            self.label_idler_counts + other.label_idler_counts,
            self.label_true_counts + other.label_true_counts,
            self.overflow + other.overflow,
        )

    def idler_counts(self, label: Optional[int] = None) -> np.ndarray:
        """Idler detected-count tally, for one trigger label or all pulses."""
        if label is None:
            return self.joint_counts.sum(axis=0)
        return self.label_idler_counts[label]

    def klyshko_counts(self):
        from .metrics import CoincidenceCounts

        J = self.joint_counts
        return CoincidenceCounts(
            singles_1=int(J[1:, :].sum()),
            singles_2=int(J[:, 1:].sum()),
            coincidences=int(J[1:, 1:].sum()),
            pulses=self.num_pulses,
        )


def _empty_result(cfg: ExperimentConfig, keep_records: bool) -> ExperimentResult:
    K = MAX_COUNT + 1
    idler_hist = cfg.histogram.make(cfg.monitor.gain)
    return ExperimentResult(
        num_pulses=0,
        n_max=cfg.n_max,
        label_counts=np.zeros(cfg.n_max + 1, dtype=np.int64),
        trigger_hist=cfg.histogram.make(cfg.trigger.gain),
        idler_hist=idler_hist,
        idler_hist_by_label={n: idler_hist for n in range(1, cfg.n_max + 1)},
        joint_counts=np.zeros((K, K), dtype=np.int64),
        label_idler_counts=np.zeros((cfg.n_max + 1, K), dtype=np.int64),
        label_true_counts=np.zeros((cfg.n_max + 1, K), dtype=np.int64),
        records=RecordBatch.concat([]) if keep_records else None,
    )


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _chain(n: np.ndarray, cfg: DetectorConfig, rng: np.random.Generator):
    k = apply_loss(n, cfg.efficiency, rng)
    k = add_dark(k, cfg.dark_mean, rng)
    if cfg.deadspot is not None:
        k = thin_counts(k, cfg.deadspot, rng)
    return k, pulse_height(k, cfg, rng)


def simulate_block(cfg: ExperimentConfig, block: int, size: int, keep_records: bool = False) -> ExperimentResult:
    """Simulate ``size`` pulses with the generator of block ``block``."""
    rng = block_rng(cfg.seed, block)
    res = _empty_result(cfg, keep_records)
    if size == 0:
        return res
    n = sample_pair_count(cfg.source, rng, size)
    k1, h1 = _chain(n, cfg.trigger, rng)
    k2, h2 = _chain(n, cfg.monitor, rng)
    label = cfg.classify(k1, h1)

    K = MAX_COUNT + 1
    c1, c2, cn = (np.minimum(a, MAX_COUNT) for a in (k1, k2, n))
    L = cfg.n_max + 1
    res.num_pulses = size
    res.label_counts = np.bincount(label, minlength=L)
    res.joint_counts = np.bincount(c1 * K + c2, minlength=K * K).reshape(K, K)
    res.label_idler_counts = np.bincount(label * K + c2, minlength=L * K).reshape(L, K)
    res.label_true_counts = np.bincount(label * K + cn, minlength=L * K).reshape(L, K)

    res.trigger_hist, o1 = res.trigger_hist.fill(h1)
    res.idler_hist, o2 = res.idler_hist.fill(h2)
    idx = res.idler_hist.bin_index(h2)
    ok = idx >= 0
    nb = res.idler_hist.n_bins
    by_label = np.bincount(label[ok] * nb + idx[ok], minlength=L * nb).reshape(L, nb)
    base = res.idler_hist
    res.idler_hist_by_label = {lab: Histogram(base.low, base.width, by_label[lab]) for lab in range(1, L)}
    res.overflow = o1 + o2
    if keep_records:
        res.records = RecordBatch(n, k1, h1, label, k2, h2)
    return res


def _block_job(args):
    return simulate_block(*args)


def run_experiment(cfg: ExperimentConfig, workers: int = 1, keep_records: bool = False) -> ExperimentResult:
    """Simulate ``cfg.num_pulses`` pulses; deterministic in ``cfg.seed`` for any worker count."""
    sizes = [BLOCK_SIZE] * (cfg.num_pulses // BLOCK_SIZE)
    if cfg.num_pulses % BLOCK_SIZE:
        sizes.append(cfg.num_pulses % BLOCK_SIZE)
    jobs = [(cfg, b, s, keep_records) for b, s in enumerate(sizes)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_block_job, jobs))
    else:
        parts = [_block_job(j) for j in jobs]
    result = _empty_result(cfg, False)
    for part in parts:
        result = result.merge(part)
    if keep_records:
        result.records = RecordBatch.concat([p.records for p in parts])
    return result
