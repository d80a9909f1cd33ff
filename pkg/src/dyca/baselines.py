"""PCA and FastICA projections used as comparison baselines."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import InputError, KTooLarge, WhiteningFailed
from .linalg import sym_eig
from .signal import Signal, make_signal


@dataclass(frozen=True)
class PcaModel:
    components: np.ndarray
    explained_variance: np.ndarray
    mean: np.ndarray
    total_variance: float


@dataclass(frozen=True)
class IcaModel:
    """FastICA result.

    ``unmixing`` (k x N) maps centred channels to sources and equals
    ``rotation @ whitening``; ``rotation`` (k x k) is orthogonal.
    """

    unmixing: np.ndarray
    whitening: np.ndarray
    rotation: np.ndarray
    mean: np.ndarray
    iterations_used: int
    converged: bool


def _covariance(q: Signal) -> tuple[np.ndarray, np.ndarray]:
    mean = q.data.mean(axis=1)
    x = q.data - mean[:, None]
    return mean, x @ x.T / (q.n_samples - 1)


def pca_fit(q: Signal, k: int) -> PcaModel:
    """Top-``k`` eigenvectors of the channel covariance (divisor ``T - 1``)."""
    if not 1 <= k <= q.n_channels:
        raise KTooLarge(f"k = {k} but the signal has {q.n_channels} channels")
    mean, cov = _covariance(q)
    pair = sym_eig(cov)
    var = np.maximum(pair.eigenvalues[:k], 0.0)
    return PcaModel(pair.eigenvectors[:, :k], var, mean, float(np.trace(cov)))


def pca_inverse(x: Signal, model: PcaModel) -> Signal:
    """Map ``k``-channel PCA scores back to channel space."""
    k = x.n_channels
    return make_signal(model.mean[:, None] + model.components[:, :k] @ x.data, x.sample_rate_hz)


def _sym_decorrelate(w: np.ndarray) -> np.ndarray:
    # (W W^T)^{-1/2} W
    s, u = np.linalg.eigh(w @ w.T)
    return (u * (1.0 / np.sqrt(s))) @ u.T @ w


def ica_fit(q: Signal, k: int, max_iter: int = 500, tol: float = 1e-6, seed: int = 0) -> IcaModel:
    """Symmetric fixed-point FastICA with the ``tanh`` contrast.

    Whitens with the top-``k`` principal components, then iterates
    ``W <- E[g(WZ) Z^T] - diag(E[g'(WZ)]) W`` followed by symmetric
    decorrelation until ``max |1 - |diag(W_new W^T)|| < tol``.
    """
    if not 1 <= k <= q.n_channels:
        raise KTooLarge(f"k = {k} but the signal has {q.n_channels} channels")
    mean, cov = _covariance(q)
    pair = sym_eig(cov)
    d = pair.eigenvalues[:k]
    if not d[-1] > 1e-12 * max(pair.eigenvalues[0], 1e-300):
        raise WhiteningFailed(f"covariance rank below {k}: eigenvalues {d}")
    whitening = pair.eigenvectors[:, :k].T / np.sqrt(d)[:, None]
    z = whitening @ (q.data - mean[:, None])
    t = z.shape[1]

    rng = np.random.default_rng(seed)
    w = _sym_decorrelate(rng.standard_normal((k, k)))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = np.tanh(w @ z)
        g_prime = 1.0 - g * g
        w_new = _sym_decorrelate(g @ z.T / t - g_prime.mean(axis=1)[:, None] * w)
        change = np.max(np.abs(np.abs(np.einsum("ij,ij->i", w_new, w)) - 1.0))
        w = w_new
        if change < tol:
            converged = True
            break
    return IcaModel(w @ whitening, whitening, w, mean, it, converged)


def baseline_project(q: Signal, model: PcaModel | IcaModel, k: int) -> Signal:
    """First ``k`` PCA scores or ICA sources of ``q``."""
    if isinstance(model, PcaModel):
        avail = model.components.shape[1]
        mat = model.components.T
    elif isinstance(model, IcaModel):
        avail = model.unmixing.shape[0]
        mat = model.unmixing
    else:
        raise InputError(f"unsupported model type {type(model).__name__}")
    if not 1 <= k <= avail:
        raise KTooLarge(f"k = {k} but the model has {avail} components")
    return make_signal(mat[:k] @ (q.data - model.mean[:, None]), q.sample_rate_hz)


def rank_ica_components(q: Signal, model: IcaModel, events: Iterable) -> np.ndarray:
    """Component order by in-event over out-of-event variance ratio, largest first.

    Used to pick the "best" ICA components for trajectory comparisons.
    """
    src = model.unmixing @ (q.data - model.mean[:, None])
    inside = np.zeros(q.n_samples, dtype=bool)
    for e in events:
        inside[int(round(e[0] * q.sample_rate_hz)):int(round(e[1] * q.sample_rate_hz))] = True
    if inside.all() or not inside.any():
        return np.arange(src.shape[0])
    ratio = src[:, inside].var(axis=1) / np.maximum(src[:, ~inside].var(axis=1), 1e-300)
    return np.argsort(-ratio, kind="stable")


def select_components(model: IcaModel, order) -> IcaModel:
    order = np.asarray(order, dtype=int)
    return IcaModel(model.unmixing[order], model.whitening, model.rotation[order], model.mean,
                    model.iterations_used, model.converged)
