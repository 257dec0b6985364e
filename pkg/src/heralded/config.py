"""JSON run configuration.

Schema (all keys optional unless noted; unknown keys are rejected)::

    {
      "seed": int,
      "num_pulses": int,
      "rep_rate_hz": float,
      "classification": "pulse_height" | "ideal",
      "n_max": int,                        # highest herald label
      "windows": [[label, low, high], ...],  # overrides the default SCA windows
      "source": {"kind": "poisson" | "thermal", "mean_pairs": float},
      "pump": {"slope": float, "power": float},   # mean_pairs = slope * power
      "trigger": DETECTOR, "monitor": DETECTOR,
      "histogram": {"low": float, "high": float, "bins_per_gain": int},
      "reconstruct": {"n_peaks": int, "truncation": int, "mode": "signed" | "constrained",
                      "shared_spacing": bool},
      "sweep": {"powers_uW": [float, ...], "pulses_per_point": int, "truncation": int,
                "n_values": [int, ...], "mode": "signed" | "constrained",
                "slope": float,                         # explicit calibration, or
                "reference_power_uW": float,            # calibrate herald-1 probability
                "target_label1_prob": float}            # ... to this value at that power
    }

    DETECTOR = {"efficiency", "dark_mean", "gain", "excess_noise", "baseline_sigma",
                "deadspot": null | {"beam_sigma", "active_diameter", "spot_diameter"}}
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from .detector import DeadSpot, DetectorConfig
from .experiment import ExperimentConfig, HistogramSpec, ScaWindows
from .metrics import REFERENCE_LABEL1_PROB
from .stats import PumpCalibration, SourceModel


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ReconstructOptions:
    n_peaks: int = 5
    truncation: Optional[int] = None
    mode: str = "signed"
    shared_spacing: bool = False

    def __post_init__(self):
        if self.mode not in ("signed", "constrained"):
            raise ValueError(f"mode must be 'signed' or 'constrained', got {self.mode!r}")
        if self.n_peaks < 1:
            raise ValueError("n_peaks must be >= 1")


@dataclass(frozen=True)
class SweepOptions:
    powers_uW: tuple = ()
    pulses_per_point: int = 1_000_000
    truncation: int = 12
    n_values: tuple = (1, 2, 3, 4)
    mode: str = "signed"
    slope: Optional[float] = None
    reference_power_uW: float = 40.0
    target_label1_prob: float = REFERENCE_LABEL1_PROB

    def __post_init__(self):
        object.__setattr__(self, "powers_uW", tuple(float(p) for p in self.powers_uW))
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        if self.mode not in ("signed", "constrained"):
            raise ValueError(f"mode must be 'signed' or 'constrained', got {self.mode!r}")


@dataclass(frozen=True)
class RunConfig:
    experiment: ExperimentConfig
    reconstruct: ReconstructOptions = field(default_factory=ReconstructOptions)
    sweep: SweepOptions = field(default_factory=SweepOptions)
    raw: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.experiment.seed

    @property
    def sha256(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


TOP_KEYS = {
    "seed", "num_pulses", "rep_rate_hz", "classification", "n_max", "windows",
    "source", "pump", "trigger", "monitor", "histogram", "reconstruct", "sweep",
}


def _line_of(text: str, key: str) -> Optional[int]:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return None if m is None else text.count("\n", 0, m.start()) + 1


def _where(text: str, key: str) -> str:
    line = _line_of(text, key)
    return f"line {line}" if line else "config"


def _build(cls, data: Any, path: str, text: str, **extra):
    if not isinstance(data, dict):
        raise ConfigError(f"{_where(text, path.split('.')[-1])}: {path} must be an object")
    allowed = {f.name for f in fields(cls)}
    for key in data:
        if key not in allowed:
            raise ConfigError(f"{_where(text, key)}: unknown key {path}.{key!r}")
    kwargs = {**data, **extra}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{_where(text, path.split('.')[-1])}: invalid {path}: {exc}") from None


def _detector(data, name, text) -> DetectorConfig:
    data = dict(data)
    deadspot = data.pop("deadspot", None)
    ds = None if deadspot is None else _build(DeadSpot, deadspot, f"{name}.deadspot", text)
    return _build(DetectorConfig, data, name, text, deadspot=ds)


def parse_config(raw: dict, text: str = "", seed: Optional[int] = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    for key in raw:
        if key not in TOP_KEYS:
            raise ConfigError(f"{_where(text, key)}: unknown key {key!r}")
    raw = dict(raw)
    if seed is not None:
        raw["seed"] = seed
    try:
        kw: dict = {}
        if "source" in raw:
            kw["source"] = _build(SourceModel, raw["source"], "source", text)
        if "pump" in raw:
            kw["pump"] = _build(PumpCalibration, raw["pump"], "pump", text)
        kw["trigger"] = _detector(raw.get("trigger", {"efficiency": 0.68}), "trigger", text)
        kw["monitor"] = _detector(raw.get("monitor", {"efficiency": 0.58}), "monitor", text)
        if "histogram" in raw:
            kw["histogram"] = _build(HistogramSpec, raw["histogram"], "histogram", text)
        if "windows" in raw:
            kw["windows"] = ScaWindows.from_list(raw["windows"])
        for src, dst in (("seed", "seed"), ("num_pulses", "num_pulses"), ("rep_rate_hz", "rep_rate"),
                         ("classification", "classification"), ("n_max", "n_max")):
            if src in raw:
                kw[dst] = raw[src]
        for k in ("seed", "num_pulses", "n_max"):
            if k in kw and not (isinstance(kw[k], int) and not isinstance(kw[k], bool)):
                raise ConfigError(f"{_where(text, k)}: {k} must be an integer")
        experiment = ExperimentConfig(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid experiment settings: {exc}") from None
    rec = _build(ReconstructOptions, raw.get("reconstruct", {}), "reconstruct", text)
    sw = _build(SweepOptions, raw.get("sweep", {}), "sweep", text)
    return RunConfig(experiment, rec, sw, raw)


def load_config(path, seed: Optional[int] = None) -> RunConfig:
    """Read and validate a JSON config; errors carry the offending line."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    try:
        return parse_config(raw, text, seed)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
