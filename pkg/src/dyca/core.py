"""Dynamical Component Analysis.

A signal ``q(t)`` whose amplitudes follow partly linear ODEs has
projection directions ``u`` for which ``u . dq/dt`` is (almost) a linear
function of ``q``.  Those directions are the generalized eigenvectors of

    C1 C0^-1 C1^T u = lambda C2 u,

with ``C0 = <q q^T>``, ``C1 = <dq q^T>`` and ``C2 = <dq dq^T>``.  The
eigenvalue lies in [0, 1] and equals one minus the smallest achievable
relative residual of that linear fit, so eigenvalues near 1 count the
linear (deterministic) equations present in the data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import linalg
from .errors import (
    DegenerateCorrelation,
    InputError,
    NotPositiveDefinite,
    RankDeficientBasis,
    RankDeficientRegressors,
    ShapeMismatch,
    TooFewSamples,
    ZeroDenominator,
)
from .signal import Signal, estimate_derivative, make_signal

EIGENVALUE_SLACK = 1e-6


@dataclass(frozen=True)
class DycaOptions:
    """Knobs for :func:`dyca_fit`.

    ``max_components=None`` means "as many as the channel count allows".
    Correlation matrices whose condition number exceeds ``cond_limit`` get a
    ridge of ``ridge_scale * trace / n`` before they are inverted or
    factorised.
    """

    determinism_threshold: float = 0.9
    min_components: int = 1
    max_components: int | None = None
    ridge_scale: float = 1e-8
    cond_limit: float = 1e12
    eig_method: str = "jacobi"
    derivative_method: str = "central"
    rank_tol: float = 1e-4
    v_method: str = "regression"

    def __post_init__(self):
        if not 0.0 < self.determinism_threshold < 1.0:
            raise InputError(
                f"determinism_threshold must lie in (0, 1), got {self.determinism_threshold}"
            )
        if self.min_components < 1:
            raise InputError(f"min_components must be >= 1, got {self.min_components}")
        if self.max_components is not None and self.max_components < self.min_components:
            raise InputError(
                f"max_components ({self.max_components}) < min_components ({self.min_components})"
            )
        if self.ridge_scale < 0:
            raise InputError(f"ridge_scale must be non-negative, got {self.ridge_scale}")
        if self.v_method not in ("regression", "c1_solve"):
            raise InputError(f"v_method must be 'regression' or 'c1_solve', got {self.v_method!r}")


@dataclass(frozen=True)
class CorrelationTriple:
    c0: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    sample_count: int


@dataclass(frozen=True)
class LinearCoefficients:
    """Least-squares coefficients of ``dx_i/dt = sum_k a_ik x_k`` for the first m amplitudes."""

    coeffs: np.ndarray
    residual_ratios: np.ndarray


@dataclass(frozen=True)
class FitDiagnostics:
    raw_eigenvalues: np.ndarray
    c0_ridge: float = 0.0
    c2_ridge: float = 0.0
    v_regularized: tuple[bool, ...] = ()
    residual_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))
    basis_rank: int = 0
    dropped_vectors: tuple[int, ...] = ()
    linear_residual_ratios: np.ndarray | None = None
    notes: tuple[str, ...] = ()

    @property
    def regularized(self) -> bool:
        return self.c0_ridge > 0 or self.c2_ridge > 0 or any(self.v_regularized)


@dataclass(frozen=True)
class DycaModel:
    """Result of :func:`dyca_fit`.

    ``eigenvalues`` are clamped to [0, 1]; the unclamped values live in
    ``diagnostics.raw_eigenvalues``.  ``basis`` is an orthonormal basis of
    ``span{u_1..u_m, v_1..v_m}`` with ``v_i = C1^-1 C2 u_i`` (see
    :func:`derived_vectors`);
    columns that turn out linearly dependent are dropped, so the basis may
    have fewer than ``2m`` columns.
    """

    eigenvalues: np.ndarray
    u_vectors: np.ndarray
    m: int
    basis: np.ndarray
    v_vectors: np.ndarray
    linear_coeffs: np.ndarray | None
    diagnostics: FitDiagnostics
    correlations: CorrelationTriple

    @property
    def n_channels(self) -> int:
        return self.u_vectors.shape[0]

    def projection_vectors(self, k: int = 3) -> np.ndarray:
        """``[u_1, ..., u_j, v_1, ...]`` trimmed to ``k`` columns.

        With ``m >= 2`` and ``k = 3`` this is ``[u_1, u_2, v_1]``: the two
        leading eigenvectors plus the vector derived from ``u_1``.
        """
        n_u = max(1, min(self.m, k - 1))
        n_v = min(k - n_u, self.v_vectors.shape[1])
        n_u = k - n_v
        cols = [self.u_vectors[:, i] for i in range(n_u)]
        cols += [self.v_vectors[:, i] for i in range(n_v)]
        return np.column_stack(cols)


def correlation_matrices(q: Signal, qdot: Signal) -> CorrelationTriple:
    """Time-averaged ``<q q^T>``, ``<dq q^T>`` and ``<dq dq^T>`` (divisor: sample count)."""
    if q.data.shape != qdot.data.shape:
        raise ShapeMismatch(f"signal shape {q.data.shape} != derivative shape {qdot.data.shape}")
    x = q.data
    dx = qdot.data
    t = x.shape[1]
    c0 = linalg.sym(x @ x.T / t)
    c1 = dx @ x.T / t
    c2 = linalg.sym(dx @ dx.T / t)
    return CorrelationTriple(c0, c1, c2, t)


def _ridge(c: np.ndarray, opts: DycaOptions, name: str) -> tuple[np.ndarray, float]:
    n = c.shape[0]
    trace = float(np.trace(c))
    if not trace > 0.0:
        raise DegenerateCorrelation(f"{name} has non-positive trace {trace!r}")
    if np.linalg.cond(c) <= opts.cond_limit:
        try:
            linalg.cholesky(c)
            return c, 0.0
        except NotPositiveDefinite:
            pass
    eps = opts.ridge_scale * trace / n
    return c + eps * np.eye(n), eps


@dataclass(frozen=True)
class _Eigenproblem:
    pair: linalg.EigPair
    lhs: np.ndarray
    rhs: np.ndarray
    c0: np.ndarray
    corr: CorrelationTriple
    c0_ridge: float
    c2_ridge: float


def _check_fit_input(q: Signal, qdot: Signal | None, opts: DycaOptions) -> Signal:
    n, t = q.data.shape
    if n < 2:
        raise InputError(f"DyCA needs at least 2 channels, got {n}")
    if t < 2 * n:
        raise TooFewSamples(f"{t} samples for {n} channels; need at least {2 * n}")
    if qdot is None:
        qdot = estimate_derivative(q, opts.derivative_method)
    return qdot


def _eigenproblem(q: Signal, qdot: Signal, opts: DycaOptions) -> _Eigenproblem:
    corr = correlation_matrices(q, qdot)
    c0, c0_ridge = _ridge(corr.c0, opts, "C0")
    c2, c2_ridge = _ridge(corr.c2, opts, "C2")
    lhs = linalg.sym(corr.c1 @ linalg.solve(c0, corr.c1.T).x)
    try:
        pair = linalg.gen_sym_def_eig(lhs, c2, method=opts.eig_method)
    except NotPositiveDefinite as exc:
        raise DegenerateCorrelation(f"C2 not positive definite after regularization: {exc}") from exc
    return _Eigenproblem(pair, lhs, c2, c0, corr, c0_ridge, c2_ridge)


def derived_vectors(prob: _Eigenproblem, u: np.ndarray, lam: np.ndarray,
                    opts: DycaOptions) -> tuple[np.ndarray, list[bool]]:
    """The companion vectors ``v_i = C1^-1 C2 u_i`` for the given eigenpairs.

    ``v_method="regression"`` evaluates them as ``C0^-1 C1^T u_i / lambda_i``,
    which coincides with ``C1^-1 C2 u_i`` whenever ``C1`` is invertible (apply
    ``C1`` and use the eigen-equation) but stays well conditioned when ``C1``
    is nearly singular, as it is for noisy data with few deterministic
    sources.  ``v_method="c1_solve"`` solves ``C1 v = C2 u_i`` directly.
    """
    n = u.shape[0]
    if u.shape[1] == 0:
        return np.zeros((n, 0)), []
    if opts.v_method == "c1_solve":
        cols, flags = [], []
        for i in range(u.shape[1]):
            sol = linalg.solve(prob.corr.c1, prob.rhs @ u[:, i])
            cols.append(sol.x)
            flags.append(sol.regularized)
        return np.column_stack(cols), flags
    sol = linalg.solve(prob.c0, prob.corr.c1.T @ u)
    scale = np.where(np.abs(lam) > 1e-12, lam, 1.0)
    return sol.x / scale, [sol.regularized] * u.shape[1]


def dyca_eigenvalues(q: Signal, opts: DycaOptions | None = None,
                     derivative: Signal | None = None) -> np.ndarray:
    """Raw generalized eigenvalues only, descending (no basis construction)."""
    opts = opts or DycaOptions()
    qdot = _check_fit_input(q, derivative, opts)
    return _eigenproblem(q, qdot, opts).pair.eigenvalues


def orthonormalize(vectors: np.ndarray, rank_tol: float = 1e-6) -> tuple[np.ndarray, tuple[int, ...]]:
    """Modified Gram-Schmidt with one re-orthogonalisation pass.

    A column whose remaining norm falls below ``rank_tol`` times its
    original norm is treated as dependent and dropped.  Returns the
    orthonormal columns and the indices of dropped input columns.
    """
    kept: list[np.ndarray] = []
    dropped = []
    for j in range(vectors.shape[1]):
        v = np.array(vectors[:, j], dtype=float)
        norm0 = np.linalg.norm(v)
        for _ in range(2):
            for e in kept:
                v -= (e @ v) * e
        norm = np.linalg.norm(v)
        if norm0 == 0.0 or norm <= rank_tol * norm0:
            dropped.append(j)
            continue
        kept.append(v / norm)
    if not kept:
        return np.zeros((vectors.shape[0], 0)), tuple(dropped)
    return np.column_stack(kept), tuple(dropped)


def dyca_fit(q: Signal, opts: DycaOptions | None = None,
             derivative: Signal | None = None) -> DycaModel:
    """Fit DyCA to ``q``.

    Parameters
    ----------
    q : Signal
        Multichannel signal, at least 2 channels and ``2 * n_channels`` samples.
    opts : DycaOptions, optional
        Threshold and regularisation settings.
    derivative : Signal, optional
        Precomputed time derivative of ``q``; estimated when omitted.

    Returns
    -------
    DycaModel
    """
    opts = opts or DycaOptions()
    qdot = _check_fit_input(q, derivative, opts)
    prob = _eigenproblem(q, qdot, opts)
    n = q.n_channels
    raw = prob.pair.eigenvalues
    u = prob.pair.eigenvectors

    max_m = n if opts.max_components is None else min(opts.max_components, n)
    m = int(np.count_nonzero(raw >= opts.determinism_threshold))
    m = min(max(m, min(opts.min_components, max_m)), max_m)

    resid = np.linalg.norm(prob.lhs @ u - prob.rhs @ u * raw, axis=0)

    v, v_flags = derived_vectors(prob, u[:, :m], raw[:m], opts)

    basis, dropped = orthonormalize(np.column_stack([u[:, :m], v]), opts.rank_tol)
    notes = []
    if dropped:
        notes.append(f"dropped {len(dropped)} dependent spanning vector(s)")

    coeffs = None
    ratios = None
    if basis.shape[1] >= m:
        amps = project(q, basis)
        amp_dot = make_signal(basis.T @ qdot.data, q.sample_rate_hz)
        try:
            lin = estimate_linear_coeffs(amps, m, derivative=amp_dot)
            coeffs, ratios = lin.coeffs, lin.residual_ratios
        except RankDeficientRegressors as exc:
            notes.append(f"linear coefficients not estimated: {exc}")

    diag = FitDiagnostics(
        raw_eigenvalues=raw.copy(),
        c0_ridge=prob.c0_ridge,
        c2_ridge=prob.c2_ridge,
        v_regularized=tuple(v_flags),
        residual_norms=resid,
        basis_rank=basis.shape[1],
        dropped_vectors=dropped,
        linear_residual_ratios=ratios,
        notes=tuple(notes),
    )
    return DycaModel(
        eigenvalues=np.clip(raw, 0.0, 1.0),
        u_vectors=u,
        m=m,
        basis=basis,
        v_vectors=v,
        linear_coeffs=coeffs,
        diagnostics=diag,
        correlations=prob.corr,
    )


def cost_function(u, v_list: Sequence, a, q: Signal, derivative: Signal | None = None,
                  derivative_method: str = "central") -> float:
    """Relative residual of predicting ``u . dq/dt`` from ``sum_j a_j v_j . q``.

    Returns ``<|dq^T u - sum_j a_j q^T v_j|^2> / <|dq^T u|^2>``.
    """
    qdot = derivative if derivative is not None else estimate_derivative(q, derivative_method)
    u = np.asarray(u, dtype=float)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    vs = [np.asarray(v, dtype=float) for v in v_list]
    if len(vs) != a.size:
        raise InputError(f"{len(vs)} vectors but {a.size} coefficients")
    y = u @ qdot.data
    w = sum((aj * vj for aj, vj in zip(a, vs)), np.zeros(q.n_channels))
    z = w @ q.data
    denom = np.mean(y * y)
    if not denom > 0.0:
        raise ZeroDenominator("u . dq/dt vanishes identically; cost undefined")
    r = y - z
    return float(np.mean(r * r) / denom)


def optimal_regression_vector(u, q: Signal, derivative: Signal | None = None,
                              derivative_method: str = "central") -> np.ndarray:
    """Vector ``w = C0^-1 C1^T u`` minimising the cost over ``sum_j a_j v_j`` for fixed ``u``."""
    qdot = derivative if derivative is not None else estimate_derivative(q, derivative_method)
    corr = correlation_matrices(q, qdot)
    return linalg.solve(corr.c0, corr.c1.T @ np.asarray(u, dtype=float)).x


def min_cost(u, q: Signal, derivative: Signal | None = None,
             derivative_method: str = "central") -> float:
    """Cost at the inner minimiser over ``(v, a)``; equals ``1 - lambda`` at an eigenvector."""
    qdot = derivative if derivative is not None else estimate_derivative(q, derivative_method)
    w = optimal_regression_vector(u, q, qdot)
    return cost_function(u, [w], [1.0], q, derivative=qdot)


def project(q: Signal, basis) -> Signal:
    """Amplitudes ``x(t)`` with ``q(t) ~ basis @ x(t)``.

    Orthonormal bases give ``basis^T q``; any other full-column-rank basis
    gives the least-squares coefficients.
    """
    b = np.asarray(basis, dtype=float)
    if b.ndim == 1:
        b = b[:, np.newaxis]
    if b.shape[0] != q.n_channels:
        raise ShapeMismatch(f"basis has {b.shape[0]} rows, signal has {q.n_channels} channels")
    k = b.shape[1]
    if k == 0:
        raise RankDeficientBasis("empty basis")
    gram = b.T @ b
    if np.abs(gram - np.eye(k)).max() <= 1e-8:
        return make_signal(b.T @ q.data, q.sample_rate_hz)
    if np.linalg.matrix_rank(b) < k:
        raise RankDeficientBasis(f"basis of {k} columns has rank {np.linalg.matrix_rank(b)}")
    x, *_ = np.linalg.lstsq(b, q.data, rcond=None)
    return make_signal(x, q.sample_rate_hz)


def estimate_linear_coeffs(amplitudes: Signal, m: int,
                           derivative: Signal | None = None) -> LinearCoefficients:
    """Least-squares ``a_ik`` with ``dx_i/dt ~ sum_k a_ik x_k`` for ``i < m``.

    Degenerate regressions return the minimum-norm solution. The residual
    ratio of a row is ``<res^2> / <(dx_i/dt)^2>`` (0 when the target is
    identically zero).
    """
    n, t = amplitudes.data.shape
    if not 1 <= m <= n:
        raise InputError(f"m must lie in [1, {n}], got {m}")
    if t < n:
        raise RankDeficientRegressors(f"{t} samples cannot determine {n} coefficients per row")
    xdot = derivative if derivative is not None else estimate_derivative(amplitudes)
    x = amplitudes.data
    target = xdot.data[:m]
    sol, *_ = np.linalg.lstsq(x.T, target.T, rcond=None)
    coeffs = sol.T
    res = target - coeffs @ x
    power = np.mean(target * target, axis=1)
    ratios = np.divide(np.mean(res * res, axis=1), power,
                       out=np.zeros(m), where=power > 0)
    return LinearCoefficients(coeffs, ratios)
