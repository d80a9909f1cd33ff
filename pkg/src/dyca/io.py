"""File formats: recordings (CSV), annotations (JSON), model and result exports."""

from __future__ import annotations

import csv
import json
import math
from typing import Iterable, Sequence

import numpy as np

from .core import DycaModel
from .detector import METRICS, SweepResult, WindowResult
from .errors import InputError, NonFiniteSample, NonUniformSampling, OverlapError, ParseError
from .signal import Signal, make_signal
from .synth import Event

UNIFORM_RTOL = 1e-6
UNDEFINED = "undefined"


def fmt(x: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    return f"{float(x):.17g}"


def _open_text(target, mode: str):
    if hasattr(target, "write") or hasattr(target, "read"):
        return _NoClose(target)
    return open(target, mode, newline="", encoding="utf-8")


class _NoClose:
    def __init__(self, f):
        self.f = f

    def __enter__(self):
        return self.f

    def __exit__(self, *exc):
        return False


# -- recordings -------------------------------------------------------------------


def write_recording(target, signal: Signal, t0: float = 0.0) -> None:
    """CSV with header ``time,<ch1>,...`` and one row per sample."""
    names = signal.channel_names or tuple(f"ch{i + 1}" for i in range(signal.n_channels))
    times = t0 + signal.times
    with _open_text(target, "w") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["time", *names])
        for j in range(signal.n_samples):
            w.writerow([fmt(times[j]), *(fmt(v) for v in signal.data[:, j])])


def read_recording(source) -> Signal:
    """Parse a recording CSV; the sample rate is inferred from the time column."""
    path = str(source) if not hasattr(source, "read") else None
    with _open_text(source, "r") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ParseError("empty file", path, 1)
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0].lower() != "time":
        raise ParseError("header must be 'time,<channel>,...'", path, 1, 1)
    n_ch = len(header) - 1
    body = [r for r in rows[1:] if any(cell.strip() for cell in r)]
    values = np.empty((len(body), n_ch + 1))
    for i, row in enumerate(body):
        line = i + 2
        if len(row) != n_ch + 1:
            raise ParseError(f"expected {n_ch + 1} fields, got {len(row)}", path, line)
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"cannot parse {cell!r} as a number", path, line, j + 1) from None
            if not math.isfinite(v):
                if j == 0:
                    raise ParseError(f"non-finite time stamp {cell!r}", path, line, 1)
                raise NonFiniteSample(j - 1, i, v)
            values[i, j] = v
    if values.shape[0] < 3:
        raise ParseError(f"need at least 3 samples, got {values.shape[0]}", path)
    t = values[:, 0]
    dt = np.diff(t)
    nominal = (t[-1] - t[0]) / (len(t) - 1)
    if not nominal > 0:
        raise NonUniformSampling(f"time column is not increasing ({path or 'stream'})")
    dev = np.abs(dt - nominal) / nominal
    worst = int(np.argmax(dev))
    if dev[worst] > UNIFORM_RTOL:
        raise NonUniformSampling(
            f"sampling interval {float(dt[worst])!r} s between lines {worst + 2} and {worst + 3} deviates "
            f"from {float(nominal)!r} s by {dev[worst]:.3g} (relative){' in ' + path if path else ''}"
        )
    return make_signal(values[:, 1:].T, 1.0 / nominal, header[1:])


def read_recording_start(source) -> float:
    """First time stamp of a recording CSV."""
    with _open_text(source, "r") as f:
        reader = csv.reader(f)
        next(reader, None)
        first = next(reader, None)
    return float(first[0]) if first else 0.0


# -- annotations ----------------------------------------------------------------


def write_annotations(target, events: Iterable) -> None:
    doc = [{"start_s": float(e[0]), "end_s": float(e[1]),
            "label": str(e[2]) if len(e) > 2 else "seizure"} for e in events]
    with _open_text(target, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def parse_annotations(doc, path: str | None = None) -> list[Event]:
    if not isinstance(doc, list):
        raise ParseError("annotation file must hold a JSON array", path)
    events = []
    for i, item in enumerate(doc):
        if not isinstance(item, dict):
            raise ParseError(f"entry {i} is not an object", path)
        missing = {"start_s", "end_s"} - set(item)
        if missing:
            raise ParseError(f"entry {i} lacks {', '.join(sorted(missing))}", path)
        try:
            start, end = float(item["start_s"]), float(item["end_s"])
        except (TypeError, ValueError):
            raise ParseError(f"entry {i} has non-numeric bounds", path) from None
        if not (math.isfinite(start) and math.isfinite(end)) or not start < end:
            raise ParseError(f"entry {i}: start_s ({start}) must be < end_s ({end})", path)
        events.append(Event(start, end, str(item.get("label", "seizure"))))
    events.sort(key=lambda e: e.start_s)
    for a, b in zip(events, events[1:]):
        if b.start_s < a.end_s:
            raise OverlapError(f"events [{a.start_s}, {a.end_s}) and [{b.start_s}, {b.end_s}) overlap"
                               + (f" in {path}" if path else ""))
    return events


def read_annotations(source) -> list[Event]:
    path = str(source) if not hasattr(source, "read") else None
    with _open_text(source, "r") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno, exc.colno) from None
    return parse_annotations(doc, path)


# -- models and results --------------------------------------------------------


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def model_to_dict(model: DycaModel, t0: float = 0.0, t1: float | None = None) -> dict:
    d = model.diagnostics
    return {
        "eigenvalues": [_num(v) for v in model.eigenvalues],
        "m": model.m,
        "u_vectors": model.u_vectors.tolist(),
        "v_vectors": model.v_vectors.tolist(),
        "basis": model.basis.tolist(),
        "linear_coeffs": None if model.linear_coeffs is None else model.linear_coeffs.tolist(),
        "diagnostics": {
            "raw_eigenvalues": [_num(v) for v in d.raw_eigenvalues],
            "c0_ridge": d.c0_ridge,
            "c2_ridge": d.c2_ridge,
            "v_regularized": [bool(f) for f in d.v_regularized],
            "residual_norms": [_num(v) for v in d.residual_norms],
            "basis_rank": d.basis_rank,
            "dropped_vectors": list(d.dropped_vectors),
            "linear_residual_ratios": None if d.linear_residual_ratios is None
            else [_num(v) for v in d.linear_residual_ratios],
            "notes": list(d.notes),
        },
        "range_s": [t0, t1],
    }


def write_json(target, doc) -> None:
    with _open_text(target, "w") as f:
        json.dump(doc, f, indent=1, allow_nan=False)
        f.write("\n")


WINDOW_COLUMNS = ("window_index", "start_s", "lambda1", "lambda2", "lambda3", "decision", "label")


def write_windows(target, results: Sequence[WindowResult], sample_rate_hz: float,
                  t0: float = 0.0) -> None:
    with _open_text(target, "w") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(WINDOW_COLUMNS)
        for r in results:
            lam = [fmt(v) if math.isfinite(v) else "nan" for v in r.eigenvalues]
            label = "" if r.true_label is None else int(r.true_label)
            w.writerow([r.window.index, fmt(t0 + r.window.start_index / sample_rate_hz), *lam,
                        int(r.decision), label])


def read_windows(source) -> list[dict]:
    with _open_text(source, "r") as f:
        rows = list(csv.DictReader(f))
    out = []
    for row in rows:
        out.append({
            "window_index": int(row["window_index"]),
            "start_s": float(row["start_s"]),
            "eigenvalues": tuple(float(row[f"lambda{i}"]) for i in (1, 2, 3)),
            "decision": bool(int(row["decision"])),
            "label": None if row["label"] == "" else bool(int(row["label"])),
        })
    return out


def _cell(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return UNDEFINED
    return fmt(v)


def write_sweep(target, sweep: SweepResult) -> None:
    """One row per threshold: mean/std/defined-count per metric, then per-dataset values."""
    names = list(sweep.dataset_names) or [f"d{i}" for i in range(len(sweep.reports))]
    header = ["threshold"]
    for m in METRICS:
        header += [f"{m}_mean", f"{m}_std", f"{m}_n"]
    for name in names:
        header += [f"{m}_{name}" for m in METRICS]
    with _open_text(target, "w") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for j, t in enumerate(sweep.thresholds):
            row = [fmt(t)]
            for m in METRICS:
                row += [_cell(sweep.mean[m][j]), _cell(sweep.std[m][j]), int(sweep.defined[m][j])]
            for reports in sweep.reports:
                row += [_cell(getattr(reports[j], m)) for m in METRICS]
            w.writerow(row)


def read_sweep(source) -> dict:
    """Columns of a sweep CSV as float arrays (``undefined`` becomes NaN)."""
    with _open_text(source, "r") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(header):
        cols[name] = np.array([np.nan if r[j] == UNDEFINED else float(r[j]) for r in body])
    return cols


# -- run configuration ----------------------------------------------------------

# Flat keys accepted in a config file; each maps onto a CLI flag of the same name
# (underscores become dashes).
CONFIG_KEYS = {
    "window_s": float,
    "overlap": float,
    "threshold": float,
    "k": int,
    "combine": str,
    "determinism_threshold": float,
    "min_components": int,
    "max_components": int,
    "ridge_scale": float,
    "cond_limit": float,
    "rank_tol": float,
    "eig_method": str,
    "derivative_method": str,
    "v_method": str,
    "grid": str,
    "workers": int,
    "method": str,
    "components": int,
    "start_s": float,
    "end_s": float,
    "annotations": str,
    "out": str,
    "scenario": str,
    "duration_s": float,
    "sample_rate_hz": float,
    "channels": int,
    "snr_db": float,
    "noise_sigma": float,
    "seed": int,
    "background": str,
    "evaluation_suite": bool,
    "reference": str,
}


def load_config(source) -> dict:
    """Read a flat JSON config; unknown keys are rejected by name."""
    path = str(source) if not hasattr(source, "read") else None
    with _open_text(source, "r") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise ParseError("config must be a JSON object", path)
    out = {}
    for key, value in doc.items():
        if key not in CONFIG_KEYS:
            raise InputError(f"unknown config key {key!r}" + (f" in {path}" if path else ""))
        conv = CONFIG_KEYS[key]
        try:
            out[key] = conv(value) if value is not None else None
        except (TypeError, ValueError):
            raise InputError(f"config key {key!r} has invalid value {value!r}") from None
    return out
