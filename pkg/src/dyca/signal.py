"""Multichannel signal container, derivative estimation and sliding windows."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    BadSampleRate,
    EmptySignal,
    InputError,
    NonFiniteSample,
    WindowLongerThanSignal,
)

MIN_SAMPLES = 3


@dataclass(frozen=True, eq=False)
class Signal:
    """Uniformly sampled multichannel time series.

    ``data`` is stored channel-major, shape ``(n_channels, n_samples)``.
    Instances are read-only; use :func:`make_signal` to build one from raw
    input so that the invariants are checked.
    """

    data: np.ndarray
    sample_rate_hz: float
    channel_names: tuple[str, ...] | None = None

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_seconds(self) -> float:
        return self.n_samples / self.sample_rate_hz

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate_hz

    def slice(self, start: int, stop: int) -> "Signal":
        """Samples ``[start, stop)`` as a new signal (shares memory)."""
        return make_signal(self.data[:, start:stop], self.sample_rate_hz, self.channel_names)

    def window(self, view: "WindowView") -> "Signal":
        return self.slice(view.start_index, view.start_index + view.length)


def make_signal(data, sample_rate_hz: float,
                channel_names: Sequence[str] | None = None) -> Signal:
    """Validate ``data`` (channels x samples) and wrap it in a :class:`Signal`.

    A 1-D array is treated as a single channel.
    """
    arr = np.array(data, dtype=float, copy=True)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2:
        raise InputError(f"signal data must be 2-D (channels x samples), got {arr.ndim}-D")
    n, t = arr.shape
    if n < 1 or t < MIN_SAMPLES:
        raise EmptySignal(
            f"signal needs >= 1 channel and >= {MIN_SAMPLES} samples, got shape {arr.shape}"
        )
    try:
        rate = float(sample_rate_hz)
    except (TypeError, ValueError):
        raise BadSampleRate(f"sample rate {sample_rate_hz!r} is not a number") from None
    if not np.isfinite(rate) or rate <= 0:
        raise BadSampleRate(f"sample rate must be positive and finite, got {sample_rate_hz!r}")
    bad = ~np.isfinite(arr)
    if bad.any():
        ch, idx = np.argwhere(bad)[0]
        raise NonFiniteSample(int(ch), int(idx), float(arr[ch, idx]))
    names = None
    if channel_names is not None:
        names = tuple(str(c) for c in channel_names)
        if len(names) != n:
            raise InputError(f"{len(names)} channel names given for {n} channels")
    arr.setflags(write=False)
    return Signal(arr, rate, names)


def estimate_derivative(s: Signal, method: str = "central") -> Signal:
    """Time derivative of every channel.

    ``method="central"`` uses second-order central differences in the
    interior and first-order one-sided differences at both ends.
    ``method="forward"`` uses first-order forward differences everywhere
    except the last sample (backward).
    """
    x = s.data
    fs = s.sample_rate_hz
    d = np.empty_like(x)
    if method == "central":
        d[:, 1:-1] = (x[:, 2:] - x[:, :-2]) * (fs / 2.0)
    elif method == "forward":
        d[:, 1:-1] = (x[:, 2:] - x[:, 1:-1]) * fs
    else:
        raise InputError(f"unknown derivative method {method!r}")
    d[:, 0] = (x[:, 1] - x[:, 0]) * fs
    d[:, -1] = (x[:, -1] - x[:, -2]) * fs
    d.setflags(write=False)
    return Signal(d, fs, s.channel_names)


@dataclass(frozen=True)
class WindowConfig:
    window_seconds: float = 3.0
    overlap_fraction: float = 0.9

    def __post_init__(self):
        if not self.window_seconds > 0:
            raise InputError(f"window_seconds must be positive, got {self.window_seconds}")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise InputError(f"overlap_fraction must lie in [0, 1), got {self.overlap_fraction}")

    def length(self, sample_rate_hz: float) -> int:
        w = int(round(self.window_seconds * sample_rate_hz))
        if w < MIN_SAMPLES:
            raise InputError(
                f"window of {self.window_seconds} s at {sample_rate_hz} Hz has {w} samples, "
                f"need >= {MIN_SAMPLES}"
            )
        return w

    def step(self, sample_rate_hz: float) -> int:
        return max(1, int(round(self.length(sample_rate_hz) * (1.0 - self.overlap_fraction))))


@dataclass(frozen=True)
class WindowView:
    start_index: int
    length: int
    index: int

    @property
    def stop_index(self) -> int:
        return self.start_index + self.length


def sliding_windows(s: Signal, cfg: WindowConfig) -> list[WindowView]:
    """Whole windows at starts ``0, S, 2S, ...``; a trailing partial window is dropped."""
    w = cfg.length(s.sample_rate_hz)
    step = cfg.step(s.sample_rate_hz)
    t = s.n_samples
    if w > t:
        raise WindowLongerThanSignal(f"window of {w} samples exceeds signal length {t}")
    count = (t - w) // step + 1
    return [WindowView(i * step, w, i) for i in range(count)]
