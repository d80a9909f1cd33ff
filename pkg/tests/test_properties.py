"""Randomized invariants checked with hypothesis."""

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dyca.core import dyca_eigenvalues
from dyca.detector import WindowResult, compute_metrics, decide, default_grid, sweep_from_eigenvalues
from dyca.signal import WindowConfig, WindowView, estimate_derivative, make_signal, sliding_windows
from tests.conftest import random_signal

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
SETTINGS = settings(max_examples=50, deadline=None)


@SETTINGS
@given(arrays(np.float64, (2, 3, 20), elements=finite), finite, finite,
       st.sampled_from(["central", "forward"]))
def test_derivative_is_linear(xy, a, b, method):
    x, y = (make_signal(v, 10.0) for v in xy)
    lhs = estimate_derivative(make_signal(a * x.data + b * y.data, 10.0), method).data
    rhs = a * estimate_derivative(x, method).data + b * estimate_derivative(y, method).data
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9 * (1 + np.abs(rhs).max()))


@SETTINGS
@given(st.integers(0, 10_000), st.floats(-1e3, 1e3).filter(lambda s: abs(s) > 1e-3))
def test_eigenvalues_are_scale_invariant(seed, alpha):
    q = random_signal(4, 600, seed=seed)
    scaled = make_signal(alpha * q.data, q.sample_rate_hz)
    np.testing.assert_allclose(dyca_eigenvalues(scaled), dyca_eigenvalues(q), atol=1e-8)


@SETTINGS
@given(arrays(np.float64, st.tuples(st.integers(1, 60), st.just(3)), elements=st.floats(0, 1)),
       st.integers(1, 3), st.sampled_from(["all", "any"]))
def test_decisions_are_nested_in_the_threshold(eig, k, combine):
    eig = -np.sort(-eig, axis=1)
    grid = default_grid()
    flags = np.array([[decide(e, t, k, combine) for e in eig] for t in grid])
    assert not np.any(flags[1:] & ~flags[:-1])
    lab = eig[:, 0] > 0.7
    sweep = sweep_from_eigenvalues([eig], [lab], grid, k, combine)
    flagged = [r.tp + r.fp for r in sweep.reports[0]]
    assert flagged == list(flags.sum(axis=1))


@SETTINGS
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=80), st.randoms())
def test_metrics_ignore_window_order(pairs, rnd):
    results = [WindowResult(WindowView(i, 3, i), (0.0,), d, l) for i, (d, l) in enumerate(pairs)]
    shuffled = list(results)
    rnd.shuffle(shuffled)
    assert compute_metrics(shuffled) == compute_metrics(results)


@SETTINGS
@given(st.floats(0.5, 5.0), st.floats(0.0, 0.95), st.integers(200, 3000))
def test_windows_tile_the_signal(window_s, overlap, n):
    fs = 50.0
    assume(window_s * fs <= n)
    windows = sliding_windows(make_signal(np.zeros((1, n)), fs), WindowConfig(window_s, overlap))
    length = windows[0].stop_index - windows[0].start_index
    assert windows[0].start_index == 0
    assert all(w.stop_index - w.start_index == length for w in windows)
    assert windows[-1].stop_index <= n
    step = WindowConfig(window_s, overlap).step(fs)
    assert all(b.start_index - a.start_index == step for a, b in zip(windows, windows[1:]))
    assert windows[-1].stop_index + step > n          # no further whole window fits
