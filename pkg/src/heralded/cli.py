"""Command-line front end: ``heralded {simulate,reconstruct,sweep,klyshko}``.

Exit codes: 0 success, 2 configuration or input-schema error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from pathlib import Path

from . import io
from .config import ConfigError, load_config
from .metrics import calibrate_slope, klyshko_efficiency, sweep
from .reconstruct import (
    ConvergenceError,
    FitError,
    condition_report,
    detected_distribution,
    fit_peaks,
    reconstruct,
)
from .experiment import run_experiment
from .stats import PumpCalibration

log = logging.getLogger("heralded")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class NumericalFailure(RuntimeError):
    pass


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    rc = load_config(args.config, args.seed)
    out = _out(args)
    prov = io.provenance(rc.seed, rc.sha256)
    res = run_experiment(rc.experiment, workers=args.workers, keep_records=True)
    io.write_records(out / "records.csv", res.records, prov)
    io.write_histogram(out / "trigger_hist.csv", res.trigger_hist, prov)
    io.write_histogram(out / "idler_hist_unconditioned.csv", res.idler_hist, prov)
    for label, h in res.idler_hist_by_label.items():
        io.write_histogram(out / f"idler_hist_label_{label}.csv", h, prov)
    log.info("simulated %d pulses; label counts %s", res.num_pulses, res.label_counts.tolist())
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    out = _out(args)
    hist = io.read_histogram(args.hist)
    digest = hashlib.sha256(Path(args.hist).read_bytes()).hexdigest()
    prov = io.provenance(None, digest)
    N = args.truncation if args.truncation is not None else args.peaks + 2
    report = {
        "input": str(args.hist),
        "efficiency": args.eta,
        "dark_mean": args.dark,
        "truncation": N,
        "mode": args.mode,
        "n_peaks": args.peaks,
        "gain_hint": args.gain,
        "shared_spacing": args.shared_spacing,
    }
    status = EXIT_OK
    try:
        fit = fit_peaks(hist, args.peaks, args.gain, shared_spacing=args.shared_spacing, max_iter=args.max_iter)
    except FitError as exc:
        report["error"] = str(exc)
        if exc.fit is not None:
            report["fit"] = exc.fit.to_dict()
        io.write_json(out / "fit_report.json", report, prov)
        log.error("%s", exc)
        return EXIT_NUMERIC
    report["fit"] = fit.to_dict()
    f = detected_distribution(fit)
    report["detected_distribution"] = f.probs
    try:
        p = reconstruct(f, args.eta, args.dark, N, args.mode)
        report["condition_number"] = condition_report(args.eta, args.dark, N)
        report["distribution"] = p.probs
        io.write_distribution(out / "distribution.csv", p.probs, prov)
    except (ConvergenceError, ValueError) as exc:
        report["error"] = str(exc)
        log.error("%s", exc)
        status = EXIT_NUMERIC
    io.write_json(out / "fit_report.json", report, prov)
    return status


def cmd_sweep(args) -> int:
    rc = load_config(args.config, args.seed)
    opts = rc.sweep
    if not opts.powers_uW:
        raise ConfigError(f"{args.config}: sweep.powers_uW must be a non-empty list")
    cfg = rc.experiment
    if opts.slope is not None:
        cal = PumpCalibration(opts.slope, opts.reference_power_uW)
    else:
        cal = calibrate_slope(cfg, opts.reference_power_uW, opts.target_label1_prob)
    mode = args.mode or opts.mode
    result = sweep(cfg, opts.powers_uW, opts.pulses_per_point, cal, N=opts.truncation, mode=mode,
                   n_values=opts.n_values, workers=args.workers)
    out = _out(args)
    prov = io.provenance(rc.seed, rc.sha256)
    io.write_csv(out / "sweep.csv", result.COLUMNS, result.rows(), prov)
    meta = dict(result.metadata)
    meta["calibration"]["source"] = "explicit" if opts.slope is not None else "herald-1 probability"
    meta["calibration"]["target_label1_prob"] = opts.target_label1_prob
    meta["rep_rate_hz"] = cfg.rep_rate
    io.write_json(out / "metadata.json", meta, prov)
    return EXIT_OK


def cmd_klyshko(args) -> int:
    rc = load_config(args.config, args.seed)
    cfg = rc.experiment
    res = run_experiment(cfg, workers=args.workers)
    counts = res.klyshko_counts()
    try:
        est = klyshko_efficiency(counts, cfg.trigger.dark_mean, cfg.monitor.dark_mean)
    except ValueError as exc:
        raise NumericalFailure(str(exc)) from None
    out = _out(args)
    payload = {
        "counts": {
            "singles_1": counts.singles_1,
            "singles_2": counts.singles_2,
            "coincidences": counts.coincidences,
            "pulses": counts.pulses,
        },
        "estimate": est._asdict(),
        "configured": {"eta1": cfg.trigger.efficiency, "eta2": cfg.monitor.efficiency},
    }
    io.write_json(out / "klyshko.json", payload, io.provenance(rc.seed, rc.sha256))
    print(f"eta1 = {est.eta1:.4f} +/- {est.eta1_stderr:.4f}   eta2 = {est.eta2:.4f} +/- {est.eta2_stderr:.4f}")
    print(f"dark-corrected: eta1 = {est.eta1_corrected:.4f}   eta2 = {est.eta2_corrected:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heralded", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="JSON run configuration")
            p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("simulate", help="simulate pulses; write records and histograms")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="fit peaks of a histogram CSV and invert loss")
    common(p, config=False)
    p.add_argument("--hist", required=True, help="histogram CSV (bin_low,bin_high,count)")
    p.add_argument("--eta", type=float, default=0.58, help="monitor efficiency")
    p.add_argument("--dark", type=float, default=0.01, help="monitor dark counts per window")
    p.add_argument("--truncation", "-N", type=int, default=None)
    p.add_argument("--peaks", type=int, default=5)
    p.add_argument("--gain", type=float, default=1.0, help="peak spacing hint")
    p.add_argument("--mode", choices=("signed", "constrained"), default="signed")
    p.add_argument("--shared-spacing", action="store_true")
    p.add_argument("--max-iter", type=int, default=500, help="fit evaluation budget")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("sweep", help="fidelity and rate versus pump power")
    common(p)
    p.add_argument("--mode", choices=("signed", "constrained"), default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("klyshko", help="estimate efficiencies from coincidences")
    common(p)
    p.set_defaults(func=cmd_klyshko)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, io.SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, FitError, ConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
