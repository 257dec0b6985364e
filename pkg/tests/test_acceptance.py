"""Acceptance checks, one per criterion.

Run under pytest (a PASS/FAIL summary line per criterion is printed at the
end of the session) or directly::

    python3 tests/test_acceptance.py
"""

from __future__ import annotations

import filecmp
import json
import math
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from heralded.detector import DetectorConfig, forward_matrix
from heralded.experiment import ExperimentConfig, run_experiment
from heralded.metrics import klyshko_efficiency, posterior_oracle, sweep
from heralded.reconstruct import inversion_covariance, invert_counts, invert_counts_constrained
from heralded.stats import SourceModel

# gated trigger: no dark clicks inside the herald window (see README)
TRIGGER = DetectorConfig(efficiency=0.68, dark_mean=0.0, gain=1.0, excess_noise=1.03, baseline_sigma=0.15)
MONITOR = DetectorConfig(efficiency=0.58, dark_mean=0.01, gain=1.0, excess_noise=1.03, baseline_sigma=0.15)
N_TRUNC = 12
MU_GRID = np.geomspace(0.01, 2.0, 10)


@dataclass
class Outcome:
    key: str
    title: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.key} {self.title}: {self.detail} [{self.seconds:.1f}s]"


RESULTS: dict[str, Outcome] = {}


def lab_cfg(mu: float, classification: str = "pulse_height", pulses: int = 10**6, seed: int = 0) -> ExperimentConfig:
    return ExperimentConfig(
        source=SourceModel("poisson", mu),
        trigger=TRIGGER,
        monitor=MONITOR,
        classification=classification,
        num_pulses=pulses,
        seed=seed,
    )


def conditional(res, label: int, N: int = N_TRUNC):
    """Detected-count distribution of the idler for one herald label, and its size."""
    c = int(res.label_counts[label])
    return res.idler_counts(label)[: N + 1] / c, c


def timed(key, title):
    def wrap(fn):
        def run():
            t0 = time.perf_counter()
            passed, detail = fn()
            out = Outcome(key, title, bool(passed), detail, time.perf_counter() - t0)
            RESULTS[key] = out
            return out

        run.__name__ = fn.__name__
        return run

    return wrap


# ---- criteria -----------------------------------------------------------


@timed("C1", "loss-inversion round trip")
def criterion_1():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    worst = 0.0
    for eta in (0.3, 0.58, 0.9):
        for d in (0.0, 0.01):
            A = forward_matrix(eta, d, 10)
            for _ in range(100):
                p = rng.dirichlet(np.ones(11))
                worst = max(worst, np.abs(invert_counts(A @ p, eta, d, 10).probs - p).max())
    dt = time.perf_counter() - t0
    return worst <= 1e-9 and dt < 1.0, f"max error {worst:.2e} over 600 cases in {dt:.3f}s (limit 1e-9, 1s)"


@timed("C2", "hand-check inversion")
def criterion_2():
    p = invert_counts([0.25, 0.5, 0.25], 0.5, 0.0, 2).probs
    err = np.abs(p - [0, 0, 1]).max()
    return err <= 1e-12, f"p={np.round(p, 15).tolist()} max error {err:.1e}"


@timed("C3", "Klyshko reproduction")
def criterion_3():
    t0 = time.perf_counter()
    det1 = replace(TRIGGER, dark_mean=0.0)
    det2 = replace(MONITOR, dark_mean=0.0)
    cfg = ExperimentConfig(source=SourceModel("poisson", 0.01), trigger=det1, monitor=det2, num_pulses=10**7, seed=0)
    est = klyshko_efficiency(run_experiment(cfg).klyshko_counts())
    dt = time.perf_counter() - t0
    ok = abs(est.eta1 - 0.68) <= 0.005 and abs(est.eta2 - 0.58) <= 0.005 and dt < 30
    return ok, (
        f"eta1={est.eta1:.4f}+/-{est.eta1_stderr:.4f} eta2={est.eta2:.4f}+/-{est.eta2_stderr:.4f} "
        f"(targets 0.68, 0.58 +/-0.005; runtime {dt:.1f}s < 30s)"
    )


@timed("C4", "low-power heralded fidelity")
def criterion_4():
    t0 = time.perf_counter()
    cfg = lab_cfg(0.1, "ideal", 10**7)
    res = run_experiment(cfg)
    parts, ok = [], True
    for n in (1, 2, 3):
        f, c = conditional(res, n)
        p = invert_counts(f, MONITOR.efficiency, MONITOR.dark_mean, N_TRUNC).probs
        oracle = posterior_oracle(cfg.source, TRIGGER, n, N_TRUNC)
        se = math.sqrt(inversion_covariance(forward_matrix(0.58, 0.01, N_TRUNC) @ oracle.probs, c, 0.58, 0.01, N_TRUNC)[n, n])
        ok &= p[n] >= 0.95 - 0.02
        parts.append(f"F{n}={p[n]:.4f} (se {se:.3f}, oracle {oracle[n]:.4f}, heralds {c})")
    dt = time.perf_counter() - t0
    ok &= dt < 60
    return ok, "; ".join(parts) + f"; need >= 0.95-0.02; runtime {dt:.1f}s"


@lru_cache(maxsize=None)
def _five_runs():
    mu, pulses = 0.5, 3 * 10**7
    out = {}
    for cls in ("pulse_height", "ideal"):
        res = run_experiment(lab_cfg(mu, cls, pulses))
        fid, se = {}, {}
        for n in (2, 3, 4):
            f, c = conditional(res, n)
            fid[n] = invert_counts(f, 0.58, 0.01, N_TRUNC).probs[n]
            cov = inversion_covariance(f, c, 0.58, 0.01, N_TRUNC)
            se[n] = math.sqrt(cov[n, n])
        out[cls] = (fid, se)
    return out


@timed("C5", "four-photon degradation under pulse-height classification")
def criterion_5():
    runs = _five_runs()
    ph, ph_se = runs["pulse_height"]
    ideal, ideal_se = runs["ideal"]
    drop = ideal[4] - ph[4]
    ok = ph[4] < ph[2] and ph[4] < ph[3] and drop >= 0.05
    return ok, (
        f"mu=0.5: pulse-height F2={ph[2]:.3f}+/-{ph_se[2]:.3f} F3={ph[3]:.3f}+/-{ph_se[3]:.3f} "
        f"F4={ph[4]:.3f}+/-{ph_se[4]:.3f}; ideal F4={ideal[4]:.3f}+/-{ideal_se[4]:.3f}; drop {drop:.3f} (need >= 0.05)"
    )


@lru_cache(maxsize=None)
def _grid_sweep(classification: str):
    cfg = lab_cfg(0.1, classification)
    return sweep(cfg, list(MU_GRID), 10**6, N=N_TRUNC, mus=list(MU_GRID))


@timed("C6", "rate/fidelity tradeoff over the mu grid")
def criterion_6():
    t0 = time.perf_counter()
    res = _grid_sweep("pulse_height")
    worst_rate, worst_fid, ok = np.inf, -np.inf, True
    for n in (1, 2, 3, 4):
        r = res.series("rate_hz", n)
        se = res.series("rate_stderr", n)
        z = np.diff(r) / np.hypot(se[1:], se[:-1]).clip(min=1e-300)
        z = np.where(np.diff(r) >= 0, np.inf, z)
        worst_rate = min(worst_rate, z.min())
        F = res.series("fidelity_oracle", n)
        worst_fid = max(worst_fid, np.diff(F).max())
    ok = worst_rate >= -5 and worst_fid <= 1e-12
    dt = time.perf_counter() - t0
    ok &= dt < 300
    return ok, (
        f"10 points mu in [0.01, 2], 1e6 pulses each: worst rate step {worst_rate:.2f} se (need >= -5); "
        f"largest oracle fidelity increase {worst_fid:.2e} (need <= 0); runtime {dt:.1f}s"
    )


@timed("C7", "Monte Carlo conditionals match the posterior oracle")
def criterion_7():
    res = _grid_sweep("ideal")
    A = forward_matrix(0.58, 0.01, N_TRUNC).matrix
    worst, checked, skipped = 0.0, 0, 0
    for pt in res.points:
        src = SourceModel("poisson", pt.mu)
        for n in res.n_values:
            c = int(pt.label_counts[n])
            if c < 20:
                skipped += 1
                continue
            oracle = posterior_oracle(src, TRIGGER, n, N_TRUNC).probs
            se = np.sqrt(np.diag(inversion_covariance(A @ oracle, c, 0.58, 0.01, N_TRUNC)))
            z = np.abs(pt.reconstructed[n] - oracle) / np.maximum(se, 1e-12)
            worst = max(worst, float(z.max()))
            checked += 1
    return worst <= 5, f"{checked} conditionals checked ({skipped} with < 20 heralds skipped); worst |z| {worst:.2f} (need <= 5)"


@timed("C8", "negative-probability artifact at finite statistics")
def criterion_8():
    neg_seeds, constrained_neg = 0, 0
    for seed in range(20):
        res = run_experiment(lab_cfg(0.5, "pulse_height", 10**5, seed))
        signed_neg = False
        for n in (1, 2, 3, 4):
            c = int(res.label_counts[n])
            if c == 0:
                continue
            f, _ = conditional(res, n, 8)
            signed_neg |= bool((invert_counts(f, 0.58, 0.01, 8).probs < 0).any())
            q = invert_counts_constrained(f, 0.58, 0.01, 8).probs
            constrained_neg += int((q < 0).any())
        neg_seeds += signed_neg
    return neg_seeds >= 1 and constrained_neg == 0, (
        f"signed inversion negative on {neg_seeds}/20 seeds; constrained negatives in {constrained_neg} reconstructions"
    )


def _cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "heralded", *args], capture_output=True, text=True, cwd=cwd)


@timed("C9", "determinism across worker counts")
def criterion_9():
    cfg = {
        "seed": 11,
        "num_pulses": 5 * 65536 + 321,
        "source": {"kind": "poisson", "mean_pairs": 0.4},
        "trigger": {"efficiency": 0.68, "dark_mean": 0.0},
        "monitor": {"efficiency": 0.58, "dark_mean": 0.01},
        "sweep": {"powers_uW": [5.0, 20.0], "pulses_per_point": 3 * 65536 + 5, "slope": 0.02},
    }
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        (tmp / "cfg.json").write_text(json.dumps(cfg))
        same, total = 0, 0
        for cmd in ("simulate", "sweep"):
            for w in (1, 8):
                proc = _cli(cmd, "--config", str(tmp / "cfg.json"), "--out", str(tmp / f"{cmd}_{w}"), "--workers", str(w))
                if proc.returncode != 0:
                    return False, f"{cmd} --workers {w} exited {proc.returncode}: {proc.stderr.strip()}"
            names = sorted(p.name for p in (tmp / f"{cmd}_1").iterdir())
            for name in names:
                total += 1
                same += filecmp.cmp(tmp / f"{cmd}_1" / name, tmp / f"{cmd}_8" / name, shallow=False)
    return same == total, f"{same}/{total} output files byte-identical between --workers 1 and 8"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8, criterion_9]


@pytest.mark.slow
@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"C{i}" for i in range(1, 10)])
def test_criterion(criterion):
    out = criterion()
    print(out.line())
    assert out.passed, out.line()


if __name__ == "__main__":
    failed = 0
    for crit in CRITERIA:
        out = crit()
        print(out.line(), flush=True)
        failed += not out.passed
    sys.exit(1 if failed else 0)
