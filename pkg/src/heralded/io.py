"""CSV and JSON artifacts.

Every CSV starts with one ``#`` provenance line followed by a header row;
readers skip ``#`` lines. Numbers are written with ``repr``-stable
formatting so identical inputs give byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .histogram import Histogram


class SchemaError(ValueError):
    """Malformed input file; message names the file and line."""


def provenance(seed: Optional[int], config_hash: Optional[str]) -> dict:
    return {"tool": "heralded", "version": __version__, "seed": seed, "config_sha256": config_hash}


def _prov_line(prov: dict) -> str:
    return "# " + " ".join(f"{k}={'' if v is None else v}" for k, v in prov.items()) + "\n"


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if np.isnan(x):
        return "nan"
    return repr(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], prov: dict):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_prov_line(prov))
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("" if v is None else fmt(v) for v in row) + "\n")


def write_json(path, payload: dict, prov: dict):
    doc = {"provenance": prov, **payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


RECORD_HEADER = (
    "pulse_index",
    "true_pairs",
    "trigger_detected",
    "trigger_height",
    "trigger_label",
    "idler_detected",
    "idler_area",
)
HIST_HEADER = ("bin_low", "bin_high", "count")
DIST_HEADER = ("n", "probability")


def write_records(path, records, prov: dict, chunk: int = 50_000):
    """Pulse records as CSV; an unlabelled pulse has an empty trigger_label."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(_prov_line(prov))
        fh.write(",".join(RECORD_HEADER) + "\n")
        n = len(records)
        for start in range(0, n, chunk):
            stop = min(n, start + chunk)
            cols = [
                records.true_pairs[start:stop].tolist(),
                records.trigger_detected[start:stop].tolist(),
                records.trigger_height[start:stop].tolist(),
                records.trigger_label[start:stop].tolist(),
                records.idler_detected[start:stop].tolist(),
                records.idler_area[start:stop].tolist(),
            ]
            lines = [
                f"{i},{n_},{k1},{h1!r},{lab if lab else ''},{k2},{h2!r}\n"
                for i, n_, k1, h1, lab, k2, h2 in zip(range(start, stop), *cols)
            ]
            fh.writelines(lines)


def write_histogram(path, h: Histogram, prov: dict):
    edges = h.edges
    write_csv(path, HIST_HEADER, zip(edges[:-1], edges[1:], h.counts), prov)


def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if s and not s.startswith("#"):
                yield lineno, s


def read_histogram(path) -> Histogram:
    """Parse a ``bin_low,bin_high,count`` CSV with uniform contiguous bins."""
    path = Path(path)
    lines = _data_lines(path)
    try:
        lineno, header = next(lines)
    except StopIteration:
        raise SchemaError(f"{path}: no header row") from None
    if tuple(c.strip() for c in header.split(",")) != HIST_HEADER:
        raise SchemaError(f"{path}:{lineno}: expected header {','.join(HIST_HEADER)!r}, got {header!r}")
    lows, highs, counts = [], [], []
    for lineno, s in lines:
        parts = s.split(",")
        if len(parts) != 3:
            raise SchemaError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
        try:
            lo, hi, c = float(parts[0]), float(parts[1]), float(parts[2])
        except ValueError:
            raise SchemaError(f"{path}:{lineno}: non-numeric field in {s!r}") from None
        if not hi > lo:
            raise SchemaError(f"{path}:{lineno}: bin_high must exceed bin_low")
        if c < 0 or c != int(c):
            raise SchemaError(f"{path}:{lineno}: count must be a non-negative integer")
        if lows:
            width = highs[0] - lows[0]
            if abs(lo - highs[-1]) > 1e-9 * max(1.0, abs(lo)) or abs((hi - lo) - width) > 1e-9 * max(1.0, width):
                raise SchemaError(f"{path}:{lineno}: bins must be uniform and contiguous")
        lows.append(lo)
        highs.append(hi)
        counts.append(int(c))
    if not counts:
        raise SchemaError(f"{path}: histogram has no bins")
    return Histogram(lows[0], highs[0] - lows[0], np.array(counts, dtype=np.int64))


def write_distribution(path, probs, prov: dict):
    write_csv(path, DIST_HEADER, enumerate(np.asarray(probs, dtype=float)), prov)


def read_distribution(path) -> np.ndarray:
    lines = _data_lines(path)
    next(lines)
    return np.array([float(s.split(",")[1]) for _, s in lines])


def read_csv_rows(path) -> tuple[list[str], list[list[str]]]:
    """Header and raw string rows of a CSV written by this package."""
    lines = _data_lines(path)
    _, header = next(lines)
    return header.split(","), [s.split(",") for _, s in lines]
