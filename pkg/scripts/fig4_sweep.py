"""Generation rate and fidelity against pump power.

The power axis is calibrated so that herald label 1 fires with probability
11800/45000 at the reference power. Output is one CSV per quantity, ready
for plotting.

    python3 scripts/fig4_sweep.py --config configs/lab.json --out out/fig4
"""

import argparse
from pathlib import Path

from heralded import io
from heralded.config import load_config
from heralded.metrics import calibrate_slope, sweep
from heralded.stats import PumpCalibration


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/lab.json")
    ap.add_argument("--pulses", type=int, default=None, help="override pulses per point")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="out/fig4")
    args = ap.parse_args()

    rc = load_config(args.config)
    opts = rc.sweep
    cfg = rc.experiment
    if opts.slope is not None:
        cal = PumpCalibration(opts.slope, opts.reference_power_uW)
    else:
        cal = calibrate_slope(cfg, opts.reference_power_uW, opts.target_label1_prob)
    print(f"calibration: {cal.slope:.5f} pairs per pulse per uW (mu={cal.mean_pairs:.4f} at {cal.power} uW)")
    pulses = args.pulses or opts.pulses_per_point
    res = sweep(cfg, opts.powers_uW, pulses, cal, N=opts.truncation, mode=opts.mode, n_values=opts.n_values,
                workers=args.workers)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prov = io.provenance(rc.seed, rc.sha256)
    for n in res.n_values:
        rows = [
            (pt.power, pt.mu, pt.rate_hz[n], pt.rate_stderr[n], pt.fidelity_signed[n], pt.fidelity_window[n], pt.fidelity_oracle[n])
            for pt in res.points
        ]
        header = ("power_uW", "mu", "rate_hz", "rate_stderr", "fidelity", "fidelity_posterior", "fidelity_ideal_herald")
        io.write_csv(out / f"fig4_n{n}.csv", header, rows, prov)
    print(f"{'power':>7} {'mu':>7}  " + "  ".join(f"{'rate' + str(n):>8} {'F' + str(n):>6}" for n in res.n_values))
    for pt in res.points:
        cells = "  ".join(f"{pt.rate_hz[n]:8.1f} {pt.fidelity_signed[n]:6.3f}" for n in res.n_values)
        print(f"{pt.power:7.1f} {pt.mu:7.4f}  {cells}")


if __name__ == "__main__":
    main()
