"""Command-line interface: ``dyca <subcommand> [options]``.

Every option can also be given in a flat JSON file passed with ``--config``;
flags override file values, which override built-in defaults.  Exit status
is 0 on success, 1 on input errors and 2 on numerical failures, with a
JSON error object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.linalg import subspace_angles

from . import io
from .baselines import baseline_project, ica_fit, pca_fit, rank_ica_components, select_components
from .core import DycaOptions, dyca_eigenvalues, dyca_fit, project
from .detector import (DetectorConfig, default_grid, detect, label_windows, parse_grid,
                       sweep_from_eigenvalues, window_eigenvalues)
from .errors import DycaError, InputError, NumericalError, ParseError
from .signal import Signal, WindowConfig, estimate_derivative, make_signal, sliding_windows
from .synth import AnnotatedRecording, Event, Scenario, build_scenario, evaluation_scenarios

DEFAULTS = {
    "window_s": 3.0,
    "overlap": 0.9,
    "threshold": 0.9,
    "k": 2,
    "combine": "all",
    "determinism_threshold": 0.9,
    "min_components": 1,
    "max_components": None,
    "ridge_scale": 1e-8,
    "cond_limit": 1e12,
    "rank_tol": 1e-4,
    "eig_method": "jacobi",
    "derivative_method": "central",
    "v_method": "regression",
    "grid": None,
    "workers": 1,
    "method": "dyca",
    "components": 3,
    "start_s": None,
    "end_s": None,
    "annotations": None,
    "out": None,
    "scenario": None,
    "duration_s": None,
    "sample_rate_hz": None,
    "channels": None,
    "snr_db": None,
    "noise_sigma": None,
    "seed": None,
    "background": None,
    "evaluation_suite": False,
    "reference": None,
}


class _Parser(argparse.ArgumentParser):
    """Usage errors become InputError so they share exit status 1."""

    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


class Settings:
    """Resolved options: flag, then config file, then default."""

    def __init__(self, args: argparse.Namespace, config: dict):
        self._args = args
        self._config = config

    def __getattr__(self, key):
        if key.startswith("_"):
            raise AttributeError(key)
        value = getattr(self._args, key, None)
        if value is not None:
            return value
        if key in self._config:
            return self._config[key]
        return DEFAULTS[key]


# -- option groups ----------------------------------------------------------------


def _dyca_options(p):
    g = p.add_argument_group("DyCA")
    g.add_argument("--determinism-threshold", type=float,
                   help="eigenvalue cut-off for the number of deterministic components (default 0.9)")
    g.add_argument("--min-components", type=int, help="lower clamp on m (default 1)")
    g.add_argument("--max-components", type=int, help="upper clamp on m (default N)")
    g.add_argument("--ridge-scale", type=float, help="relative ridge for ill-conditioned C0/C2")
    g.add_argument("--cond-limit", type=float, help="condition number that triggers regularization")
    g.add_argument("--rank-tol", type=float, help="relative tolerance when orthonormalizing the basis")
    g.add_argument("--eig-method", choices=("jacobi", "lapack"))
    g.add_argument("--derivative-method", choices=("central", "forward"))
    g.add_argument("--v-method", choices=("regression", "c1_solve"))


def _window_options(p):
    g = p.add_argument_group("windows")
    g.add_argument("--window-s", type=float, help="window length in seconds (default 3)")
    g.add_argument("--overlap", type=float, help="window overlap fraction in [0, 1) (default 0.9)")
    g.add_argument("--workers", type=int, help="threads for per-window DyCA (default 1)")


def _decision_options(p):
    g = p.add_argument_group("decision")
    g.add_argument("--k", type=int, help="number of leading eigenvalues to test (default 2)")
    g.add_argument("--combine", choices=("all", "any"), help="require all or any of the k (default all)")


def _range_options(p):
    p.add_argument("--start-s", type=float, help="start of the analysed range (seconds)")
    p.add_argument("--end-s", type=float, help="end of the analysed range (seconds)")


def _common(p):
    p.add_argument("--config", help="flat JSON file with option values")
    p.add_argument("--out", help="output path (stdout when omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dyca", description="Dynamical Component Analysis and event detection.")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth", help="write a synthetic recording and its annotations")
    _common(p)
    p.add_argument("--scenario", help="scenario JSON document")
    p.add_argument("--duration-s", type=float)
    p.add_argument("--sample-rate-hz", type=float)
    p.add_argument("--channels", type=int)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--noise-sigma", type=float, help="noise level; overrides --snr-db")
    p.add_argument("--seed", type=int)
    p.add_argument("--background", choices=("white", "ar1"))
    p.add_argument("--evaluation-suite", action="store_true", default=None,
                   help="write the six evaluation recordings as <out>_1 ... <out>_6")

    p = sub.add_parser("fit", help="fit DyCA to a recording and print the model as JSON")
    _common(p)
    p.add_argument("recording")
    _range_options(p)
    _dyca_options(p)

    p = sub.add_parser("project", help="project a recording onto DyCA, PCA or ICA components")
    _common(p)
    p.add_argument("recording")
    p.add_argument("--method", choices=("dyca", "pca", "ica"))
    p.add_argument("--components", type=int, help="number of output channels (default 3)")
    p.add_argument("--annotations", help="events used to rank ICA components")
    p.add_argument("--seed", type=int, help="ICA initialization seed")
    _range_options(p)
    _dyca_options(p)

    p = sub.add_parser("detect", help="per-window DyCA eigenvalues and decisions")
    _common(p)
    p.add_argument("recording")
    p.add_argument("--annotations")
    p.add_argument("--threshold", type=float, help="decision threshold (default 0.9)")
    _decision_options(p)
    _window_options(p)
    _dyca_options(p)

    p = sub.add_parser("sweep", help="SPC/FDR/FNR over a threshold grid")
    _common(p)
    p.add_argument("recordings", nargs="+", help="recording CSVs, each with a sibling .json")
    p.add_argument("--grid", help="start:stop:step or comma list (default 0.5:0.995:0.005)")
    _decision_options(p)
    _window_options(p)
    _dyca_options(p)

    p = sub.add_parser("baselines", help="PCA and ICA summaries, with subspace angles if a reference is given")
    _common(p)
    p.add_argument("recording")
    p.add_argument("--components", type=int)
    p.add_argument("--annotations")
    p.add_argument("--reference", help="provenance JSON holding the true mixing matrix")
    p.add_argument("--seed", type=int)
    _range_options(p)
    _dyca_options(p)

    p = sub.add_parser("eigplot", help="full per-window DyCA eigenvalue spectrum")
    _common(p)
    p.add_argument("recording")
    p.add_argument("--annotations")
    _window_options(p)
    _dyca_options(p)
    return parser


# -- helpers ------------------------------------------------------------------------


def _dyca_opts(s: Settings) -> DycaOptions:
    return DycaOptions(
        determinism_threshold=s.determinism_threshold,
        min_components=s.min_components,
        max_components=s.max_components,
        ridge_scale=s.ridge_scale,
        cond_limit=s.cond_limit,
        eig_method=s.eig_method,
        derivative_method=s.derivative_method,
        rank_tol=s.rank_tol,
        v_method=s.v_method,
    )


def _detector_config(s: Settings, threshold: float | None = None) -> DetectorConfig:
    return DetectorConfig(
        window=WindowConfig(s.window_s, s.overlap),
        threshold=s.threshold if threshold is None else threshold,
        k_eigenvalues=s.k,
        combine=s.combine,
        dyca_opts=_dyca_opts(s),
    )


def _load(path: str) -> tuple[Signal, float]:
    return io.read_recording(path), io.read_recording_start(path)


def _shift(events, t0: float) -> list[Event]:
    return [Event(e.start_s - t0, e.end_s - t0, e.label) for e in events]


def _range(signal: Signal, t0: float, s: Settings) -> tuple[Signal, float]:
    fs = signal.sample_rate_hz
    i0 = 0 if s.start_s is None else int(round((s.start_s - t0) * fs))
    i1 = signal.n_samples if s.end_s is None else int(round((s.end_s - t0) * fs))
    if not 0 <= i0 < i1 <= signal.n_samples:
        raise InputError(f"time range [{s.start_s}, {s.end_s}] lies outside the recording "
                         f"[{t0}, {t0 + (signal.n_samples - 1) / fs}]")
    return signal.slice(i0, i1), t0 + i0 / fs


def _emit(out, writer, *args):
    if out is None:
        writer(sys.stdout, *args)
    else:
        with open(out, "w", newline="", encoding="utf-8") as f:
            writer(f, *args)


def _annotation_path(recording: str) -> Path:
    return Path(recording).with_suffix(".json")


# -- subcommands --------------------------------------------------------------------


def cmd_synth(s: Settings) -> None:
    if s.out is None:
        raise InputError("synth needs --out PREFIX")
    if s.scenario is not None:
        with open(s.scenario, encoding="utf-8") as f:
            try:
                base = Scenario.from_dict(json.load(f))
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", s.scenario, exc.lineno, exc.colno) from None
    else:
        base = Scenario()
    overrides = {k: getattr(s, k) for k in ("duration_s", "sample_rate_hz", "channels", "snr_db",
                                            "seed", "background") if getattr(s, k) is not None}
    if s.evaluation_suite:
        seed = overrides.pop("seed", 0)
        overrides.pop("duration_s", None)
        scenarios = [replace(sc, **overrides) for sc in evaluation_scenarios(seed)]
        prefixes = [f"{s.out}_{i + 1}" for i in range(len(scenarios))]
    else:
        scenarios = [replace(base, **overrides)]
        prefixes = [s.out]
    for sc, prefix in zip(scenarios, prefixes):
        rec = build_scenario(sc, s.noise_sigma)
        io.write_recording(prefix + ".csv", rec.signal)
        io.write_annotations(prefix + ".json", rec.events)
        io.write_json(prefix + ".provenance.json", rec.provenance)


def cmd_fit(s: Settings) -> None:
    signal, t0 = _load(s.recording)
    part, t_start = _range(signal, t0, s)
    model = dyca_fit(part, _dyca_opts(s))
    t_end = t_start + (part.n_samples - 1) / part.sample_rate_hz
    _emit(s.out, io.write_json, io.model_to_dict(model, t_start, t_end))


def _ica_sorted(part: Signal, k: int, seed: int, events) -> object:
    model = ica_fit(part, k, seed=seed)
    if events:
        model = select_components(model, rank_ica_components(part, model, events))
    return model


def cmd_project(s: Settings) -> None:
    signal, t0 = _load(s.recording)
    part, t_start = _range(signal, t0, s)
    k = s.components
    if s.method == "dyca":
        model = dyca_fit(part, _dyca_opts(s))
        vectors = model.projection_vectors(k)
        amps = project(part, vectors)
    elif s.method == "pca":
        amps = baseline_project(part, pca_fit(part, k), k)
    else:
        events = []
        if s.annotations:
            events = _shift(io.read_annotations(s.annotations), t_start)
        amps = baseline_project(part, _ica_sorted(part, k, s.seed or 0, events), k)
    names = tuple(f"{s.method}{i + 1}" for i in range(amps.n_channels))
    out = make_signal(amps.data, amps.sample_rate_hz, names)
    _emit(s.out, io.write_recording, out, t_start)


def cmd_detect(s: Settings) -> None:
    signal, t0 = _load(s.recording)
    rec = signal
    if s.annotations:
        rec = AnnotatedRecording(signal, tuple(_shift(io.read_annotations(s.annotations), t0)))
    results = detect(rec, _detector_config(s), workers=s.workers)
    _emit(s.out, io.write_windows, results, signal.sample_rate_hz, t0)


def cmd_sweep(s: Settings) -> None:
    cfg = _detector_config(s)
    grid = default_grid() if s.grid is None else parse_grid(s.grid)
    eigs, labels, names = [], [], []
    for path in s.recordings:
        ann = _annotation_path(path)
        if not ann.exists():
            raise InputError(f"no annotation file {ann} for recording {path}")
        signal, t0 = _load(path)
        events = _shift(io.read_annotations(ann), t0)
        windows = sliding_windows(signal, cfg.window)
        eig, _ = window_eigenvalues(signal, windows, cfg.dyca_opts, s.workers)
        eigs.append(eig)
        labels.append(label_windows(windows, events, signal.sample_rate_hz))
        names.append(Path(path).stem)
    sweep = sweep_from_eigenvalues(eigs, labels, grid, cfg.k_eigenvalues, cfg.combine, names)
    _emit(s.out, io.write_sweep, sweep)


def _angles_deg(a: np.ndarray, b: np.ndarray) -> list[float]:
    return [float(v) for v in np.degrees(subspace_angles(a, b))]


def cmd_baselines(s: Settings) -> None:
    signal, t0 = _load(s.recording)
    part, t_start = _range(signal, t0, s)
    k = s.components
    events = []
    if s.annotations:
        events = _shift(io.read_annotations(s.annotations), t_start)
    pca = pca_fit(part, k)
    ica = _ica_sorted(part, k, s.seed or 0, events)
    dyca = dyca_fit(part, _dyca_opts(s))
    doc = {
        "components": k,
        "pca": {
            "components": pca.components.tolist(),
            "explained_variance": pca.explained_variance.tolist(),
            "explained_fraction": (pca.explained_variance / pca.total_variance).tolist(),
        },
        "ica": {
            "unmixing": ica.unmixing.tolist(),
            "iterations": ica.iterations_used,
            "converged": ica.converged,
        },
        "dyca": {
            "eigenvalues": dyca.eigenvalues.tolist(),
            "projection_vectors": dyca.projection_vectors(k).tolist(),
        },
    }
    if s.reference:
        with open(s.reference, encoding="utf-8") as f:
            prov = json.load(f)
        if "mixing" not in prov:
            raise InputError(f"reference {s.reference} holds no 'mixing' entry")
        mixing = np.asarray(prov["mixing"], dtype=float)
        if mixing.shape[0] != part.n_channels:
            raise InputError(f"reference mixing has {mixing.shape[0]} rows, recording has "
                             f"{part.n_channels} channels")
        doc["principal_angles_deg"] = {
            "dyca": _angles_deg(dyca.projection_vectors(k), mixing),
            "pca": _angles_deg(pca.components, mixing),
            "ica": _angles_deg(np.linalg.pinv(ica.unmixing), mixing),
        }
    _emit(s.out, io.write_json, doc)


def _write_spectrum(f, rows, n):
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["window_index", "center_s", *(f"lambda{i + 1}" for i in range(n)), "label"])
    for row in rows:
        w.writerow(row)


def cmd_eigplot(s: Settings) -> None:
    signal, t0 = _load(s.recording)
    cfg = WindowConfig(s.window_s, s.overlap)
    windows = sliding_windows(signal, cfg)
    opts = _dyca_opts(s)
    deriv = estimate_derivative(signal, opts.derivative_method)
    labels = [None] * len(windows)
    if s.annotations:
        events = _shift(io.read_annotations(s.annotations), t0)
        labels = label_windows(windows, events, signal.sample_rate_hz)
    fs = signal.sample_rate_hz
    n = signal.n_channels
    rows = []
    for w, lab in zip(windows, labels):
        try:
            vals = np.clip(dyca_eigenvalues(signal.window(w), opts, deriv.window(w)), 0.0, 1.0)
            cells = [io.fmt(v) for v in vals]
        except NumericalError:
            cells = ["nan"] * n
        center = t0 + (w.start_index + (w.length - 1) / 2) / fs
        rows.append([w.index, io.fmt(center), *cells, "" if lab is None else int(lab)])
    _emit(s.out, _write_spectrum, rows, n)


COMMANDS = {
    "synth": cmd_synth,
    "fit": cmd_fit,
    "project": cmd_project,
    "detect": cmd_detect,
    "sweep": cmd_sweep,
    "baselines": cmd_baselines,
    "eigplot": cmd_eigplot,
}


def _error_json(exc: BaseException, category: str) -> str:
    doc = {"error": type(exc).__name__, "category": category, "message": str(exc)}
    for attr in ("path", "line", "column", "filename"):
        value = getattr(exc, attr, None)
        if value is not None:
            doc[attr] = value
    return json.dumps(doc)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        config = io.load_config(args.config) if args.config else {}
        COMMANDS[args.command](Settings(args, config))
    except NumericalError as exc:
        print(_error_json(exc, "numerical"), file=sys.stderr)
        return 2
    except (DycaError, ValueError) as exc:
        print(_error_json(exc, "input"), file=sys.stderr)
        return 1
    except OSError as exc:
        print(_error_json(exc, "input"), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
