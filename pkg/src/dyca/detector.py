"""Sliding-window event detection on DyCA eigenvalues and its evaluation.

Each window is classified as containing a deterministic event when its
largest ``k`` DyCA eigenvalues exceed a threshold.  Windows are labelled
positive only when they lie entirely inside an annotated event.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import DycaOptions, dyca_eigenvalues
from .errors import InputError, NumericalError
from .signal import Signal, WindowConfig, WindowView, estimate_derivative, sliding_windows
from .synth import AnnotatedRecording, Event

N_REPORTED = 3


@dataclass(frozen=True)
class DetectorConfig:
    window: WindowConfig = field(default_factory=WindowConfig)
    threshold: float = 0.9
    k_eigenvalues: int = 2
    combine: str = "all"
    dyca_opts: DycaOptions = field(default_factory=DycaOptions)

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise InputError(f"threshold must lie in (0, 1), got {self.threshold}")
        if not 1 <= self.k_eigenvalues <= N_REPORTED:
            raise InputError(f"k_eigenvalues must be 1, 2 or 3, got {self.k_eigenvalues}")
        if self.combine not in ("all", "any"):
            raise InputError(f"combine must be 'all' or 'any', got {self.combine!r}")


@dataclass(frozen=True)
class WindowResult:
    window: WindowView
    eigenvalues: tuple[float, ...]
    decision: bool
    true_label: bool | None = None
    failed: str | None = None

    def start_seconds(self, sample_rate_hz: float) -> float:
        return self.window.start_index / sample_rate_hz


def decide(eigenvalues: Sequence[float], threshold: float, k: int, combine: str = "all") -> bool:
    """True when the top ``k`` eigenvalues all (or any, with ``combine="any"``) exceed ``threshold``."""
    top = np.asarray(eigenvalues[:k], dtype=float)
    if top.size < k or np.isnan(top).any():
        return False
    hits = top > threshold
    return bool(hits.all() if combine == "all" else hits.any())


def label_windows(windows: Sequence[WindowView], events: Iterable,
                  sample_rate_hz: float) -> list[bool]:
    """True iff ``[start, start + W)`` lies entirely inside a single event."""
    evs = [(round(e[0] * sample_rate_hz), round(e[1] * sample_rate_hz)) for e in events]
    labels = []
    for w in windows:
        labels.append(any(s <= w.start_index and w.stop_index <= e for s, e in evs))
    return labels


def window_eigenvalues(signal: Signal, windows: Sequence[WindowView], opts: DycaOptions,
                       workers: int = 1) -> tuple[np.ndarray, list[str | None]]:
    """Top eigenvalues per window (NaN rows where DyCA failed) and per-window failure notes.

    The derivative is estimated once over the whole signal and sliced, so
    interior windows use central differences throughout.
    """
    deriv = estimate_derivative(signal, opts.derivative_method)
    n_keep = min(N_REPORTED, signal.n_channels)

    def one(view: WindowView):
        try:
            vals = dyca_eigenvalues(signal.window(view), opts, deriv.window(view))
            return np.clip(vals[:n_keep], 0.0, 1.0), None
        except NumericalError as exc:
            return np.full(n_keep, np.nan), f"{type(exc).__name__}: {exc}"

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, windows))
    else:
        results = [one(v) for v in windows]
    eig = np.zeros((len(windows), N_REPORTED))
    eig[:, :] = np.nan
    for i, (vals, _) in enumerate(results):
        eig[i, :n_keep] = vals
    return eig, [note for _, note in results]


def _as_recording(recording) -> tuple[Signal, tuple[Event, ...] | None]:
    if isinstance(recording, AnnotatedRecording):
        return recording.signal, recording.events
    return recording, None


def detect(recording, cfg: DetectorConfig | None = None, workers: int = 1) -> list[WindowResult]:
    """Run DyCA on every sliding window and threshold its leading eigenvalues.

    Windows where DyCA fails numerically are kept with ``decision=False``
    and the failure recorded in ``WindowResult.failed``.
    """
    cfg = cfg or DetectorConfig()
    signal, events = _as_recording(recording)
    windows = sliding_windows(signal, cfg.window)
    eig, notes = window_eigenvalues(signal, windows, cfg.dyca_opts, workers)
    labels = label_windows(windows, events, signal.sample_rate_hz) if events is not None else None
    out = []
    for i, w in enumerate(windows):
        vals = tuple(float(v) for v in eig[i])
        out.append(WindowResult(
            window=w,
            eigenvalues=vals,
            decision=decide(vals, cfg.threshold, cfg.k_eigenvalues, cfg.combine),
            true_label=None if labels is None else labels[i],
            failed=notes[i],
        ))
    return out


@dataclass(frozen=True)
class MetricsReport:
    """Window-level confusion counts and rates; a rate is ``None`` when its denominator is 0."""

    tp: int
    fp: int
    tn: int
    fn: int
    spc: float | None
    fdr: float | None
    fnr: float | None
    prevalence: float

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def _ratio(num: int, den: int) -> float | None:
    return num / den if den > 0 else None


def metrics_from_counts(tp: int, fp: int, tn: int, fn: int) -> MetricsReport:
    total = tp + fp + tn + fn
    return MetricsReport(
        tp=tp, fp=fp, tn=tn, fn=fn,
        spc=_ratio(tn, tn + fp),
        fdr=_ratio(fp, fp + tp),
        fnr=_ratio(fn, fn + tp),
        prevalence=(tp + fn) / total if total else 0.0,
    )


def compute_metrics(results: Iterable[WindowResult]) -> MetricsReport:
    tp = fp = tn = fn = 0
    for r in results:
        if r.true_label is None:
            raise InputError(f"window {r.window.index} carries no label")
        if r.decision:
            if r.true_label:
                tp += 1
            else:
                fp += 1
        elif r.true_label:
            fn += 1
        else:
            tn += 1
    return metrics_from_counts(tp, fp, tn, fn)


METRICS = ("spc", "fdr", "fnr")


def default_grid() -> np.ndarray:
    """0.500, 0.505, ..., 0.995."""
    return np.round(np.arange(100) * 0.005 + 0.5, 3)


@dataclass(frozen=True)
class SweepResult:
    """Per-threshold metrics for every dataset plus cross-dataset mean and std.

    ``mean[name]`` and ``std[name]`` are arrays over thresholds; NaN where no
    dataset had a defined value.  ``std`` uses the n-1 divisor and is 0 when
    only one value is defined (``single_dataset`` flags that case).
    ``defined[name]`` counts the datasets that contributed.
    """

    thresholds: np.ndarray
    reports: list[list[MetricsReport]]
    mean: dict
    std: dict
    defined: dict
    dataset_names: tuple[str, ...] = ()

    @property
    def single_dataset(self) -> bool:
        return len(self.reports) == 1

    def values(self, name: str) -> np.ndarray:
        """``(n_datasets, n_thresholds)`` array with NaN for undefined entries."""
        return np.array([[np.nan if getattr(r, name) is None else getattr(r, name) for r in row]
                         for row in self.reports])


def _aggregate(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_t = values.shape[1]
    mean = np.full(n_t, np.nan)
    std = np.full(n_t, np.nan)
    count = np.zeros(n_t, dtype=int)
    for j in range(n_t):
        col = values[:, j]
        col = col[~np.isnan(col)]
        count[j] = col.size
        if col.size:
            mean[j] = col.mean()
            std[j] = col.std(ddof=1) if col.size > 1 else 0.0
    return mean, std, count


def sweep_from_eigenvalues(eigs: Sequence[np.ndarray], labels: Sequence[Sequence[bool]],
                           grid: Sequence[float], k: int, combine: str = "all",
                           names: Sequence[str] = ()) -> SweepResult:
    """Threshold sweep over precomputed per-window eigenvalues."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise InputError("threshold grid must be non-empty and strictly ascending")
    reports = []
    for eig, lab in zip(eigs, labels):
        lab = np.asarray(lab, dtype=bool)
        top = np.asarray(eig, dtype=float)[:, :k]
        valid = ~np.isnan(top).any(axis=1)
        row = []
        for t in grid:
            hits = top > t
            dec = (hits.all(axis=1) if combine == "all" else hits.any(axis=1)) & valid
            tp = int(np.sum(dec & lab))
            fp = int(np.sum(dec & ~lab))
            fn = int(np.sum(~dec & lab))
            tn = int(np.sum(~dec & ~lab))
            row.append(metrics_from_counts(tp, fp, tn, fn))
        reports.append(row)
    mean, std, defined = {}, {}, {}
    result = SweepResult(grid, reports, mean, std, defined, tuple(names))
    for name in METRICS:
        mean[name], std[name], defined[name] = _aggregate(result.values(name))
    return result


def threshold_sweep(datasets: Sequence[AnnotatedRecording], cfg: DetectorConfig | None = None,
                    grid: Sequence[float] | None = None, names: Sequence[str] = (),
                    workers: int = 1) -> SweepResult:
    """Evaluate SPC/FDR/FNR over a threshold grid on annotated recordings.

    Eigenvalues are computed once per window and reused for every threshold.
    """
    cfg = cfg or DetectorConfig()
    if not datasets:
        raise InputError("threshold_sweep needs at least one dataset")
    grid = default_grid() if grid is None else grid
    eigs, labels = [], []
    for rec in datasets:
        windows = sliding_windows(rec.signal, cfg.window)
        eig, _ = window_eigenvalues(rec.signal, windows, cfg.dyca_opts, workers)
        eigs.append(eig)
        labels.append(label_windows(windows, rec.events, rec.signal.sample_rate_hz))
    return sweep_from_eigenvalues(eigs, labels, grid, cfg.k_eigenvalues, cfg.combine, names)


def parse_grid(text: str) -> np.ndarray:
    """``"start:stop:step"`` (stop inclusive) or a comma-separated list."""
    if ":" in text:
        try:
            start, stop, step = (float(p) for p in text.split(":"))
        except ValueError:
            raise InputError(f"bad grid {text!r}; expected start:stop:step") from None
        if step <= 0 or stop < start:
            raise InputError(f"bad grid {text!r}")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        decimals = max(0, -int(math.floor(math.log10(step))) + 3)
        return np.round(start + step * np.arange(n), decimals)
    try:
        return np.array([float(p) for p in text.split(",") if p.strip()])
    except ValueError:
        raise InputError(f"bad grid {text!r}") from None
