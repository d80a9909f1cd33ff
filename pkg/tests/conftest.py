import numpy as np
import pytest

from dyca.signal import make_signal


def oscillator_signal(n_channels=5, fs=1000.0, duration=20.0, omega=2 * np.pi, seed=0):
    """Noiseless harmonic oscillator embedded by a random full-rank mixing.

    Returns the signal, its analytic derivative and the mixing matrix.
    """
    t = np.arange(int(round(duration * fs))) / fs
    x = np.vstack([np.cos(omega * t), np.sin(omega * t)])
    dx = omega * np.vstack([-np.sin(omega * t), np.cos(omega * t)])
    mixing = np.random.default_rng(seed).standard_normal((n_channels, 2))
    return make_signal(mixing @ x, fs), make_signal(mixing @ dx, fs), mixing


def random_signal(n, t, seed, fs=100.0):
    """Random-walk plus white noise: correlated but full rank."""
    rng = np.random.default_rng(seed)
    walk = np.cumsum(rng.standard_normal((n, t)), axis=1) * 0.05
    return make_signal(walk + rng.standard_normal((n, t)), fs)


def random_spd(n, rng, shift=1.0):
    m = rng.standard_normal((n, n))
    return m.T @ m + shift * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, filled by tests/test_acceptance.py and
# repeated at the end of the run.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
