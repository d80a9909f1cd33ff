import numpy as np
import pytest
from scipy.linalg import subspace_angles
from scipy.optimize import minimize

from dyca.core import (DycaOptions, correlation_matrices, cost_function, dyca_eigenvalues, dyca_fit,
                       estimate_linear_coeffs, min_cost, optimal_regression_vector, orthonormalize,
                       project)
from dyca.errors import (DegenerateCorrelation, InputError, RankDeficientBasis, ShapeMismatch,
                         TooFewSamples, ZeroDenominator)
from dyca.signal import estimate_derivative, make_signal
from dyca.synth import DEFAULT_SHILNIKOV, EmbeddingSpec, calibrated_noise_sigma, calibrated_sources, embed
from tests.conftest import oscillator_signal, random_signal


# -- correlation matrices ------------------------------------------------------------


def test_correlations_of_constant_signal():
    c = np.array([1.5, -2.0, 0.5])
    q = make_signal(np.tile(c[:, None], 40), 10.0)
    corr = correlation_matrices(q, estimate_derivative(q))
    np.testing.assert_allclose(corr.c0, np.outer(c, c))
    np.testing.assert_array_equal(corr.c1, 0.0)
    np.testing.assert_array_equal(corr.c2, 0.0)
    assert corr.sample_count == 40


def test_correlations_of_rotation_closed_form():
    fs, w = 500.0, 3.0
    n = int(round(4 * 2 * np.pi / w * fs))          # four periods, one sample short of closing
    t = np.arange(n) * (4 * 2 * np.pi / w) / n
    q = make_signal(np.vstack([np.sin(w * t), np.cos(w * t)]), n / t[-1])
    dq = make_signal(w * np.vstack([np.cos(w * t), -np.sin(w * t)]), q.sample_rate_hz)
    corr = correlation_matrices(q, dq)
    np.testing.assert_allclose(corr.c0, 0.5 * np.eye(2), atol=1e-12)
    np.testing.assert_allclose(corr.c2, 0.5 * w**2 * np.eye(2), atol=1e-12)
    np.testing.assert_allclose(corr.c1, [[0.0, w / 2], [-w / 2, 0.0]], atol=1e-12)


def test_estimated_c1_is_antisymmetric_for_periodic_signals():
    fs = 1000.0
    t = np.arange(int(5 * fs)) / fs
    x = np.vstack([np.sin(2 * np.pi * t), np.cos(4 * np.pi * t) + 0.3 * np.sin(6 * np.pi * t)])
    q = make_signal(x, fs)
    c1 = correlation_matrices(q, estimate_derivative(q)).c1
    # c1 + c1^T = <d(q q^T)/dt> reduces to a boundary term of order 1/T
    sym_part = c1 + c1.T
    boundary = (np.outer(x[:, -1], x[:, -1]) - np.outer(x[:, 0], x[:, 0])) / t[-1]
    np.testing.assert_allclose(sym_part, boundary, atol=5e-3)


def test_correlations_shape_mismatch():
    q = make_signal(np.ones((2, 10)), 1.0)
    with pytest.raises(ShapeMismatch):
        correlation_matrices(q, make_signal(np.ones((3, 10)), 1.0))


# -- fitting --------------------------------------------------------------------------


def test_oscillator_eigenvalue_is_one_and_basis_spans_mixing():
    q, _, mixing = oscillator_signal()
    model = dyca_fit(q)
    assert model.eigenvalues[0] >= 1 - 1e-6
    assert model.m == 2
    assert model.basis.shape[1] == 2
    assert np.degrees(subspace_angles(model.basis, mixing).max()) < 0.5


def test_oscillator_linear_coefficients_describe_a_rotation():
    q, _, _ = oscillator_signal()
    model = dyca_fit(q)
    # in any orthonormal basis of the oscillation plane the generator is skew with
    # eigenvalues +-i*omega
    a = model.linear_coeffs
    assert a.shape == (2, 2)
    np.testing.assert_allclose(np.sort(np.abs(np.linalg.eigvals(a).imag)), [2 * np.pi] * 2, rtol=1e-3)
    assert np.abs(np.linalg.eigvals(a).real).max() < 1e-2
    assert model.diagnostics.linear_residual_ratios.max() < 1e-4


def test_model_invariants_on_random_signal():
    q = random_signal(6, 3000, seed=3)
    model = dyca_fit(q, DycaOptions(determinism_threshold=0.5, min_components=3))
    raw = model.diagnostics.raw_eigenvalues
    assert np.all(np.diff(raw) <= 0)
    assert raw.min() >= -1e-6 and raw.max() <= 1 + 1e-6
    assert np.all((model.eigenvalues >= 0) & (model.eigenvalues <= 1))
    b = model.basis
    np.testing.assert_allclose(b.T @ b, np.eye(b.shape[1]), atol=1e-8)
    assert model.m == 3
    assert b.shape[1] <= 6
    for i in range(model.m):
        assert min_cost(model.u_vectors[:, i], q) == pytest.approx(1 - raw[i], abs=1e-8)


def test_white_noise_eigenvalues_are_small():
    worst = 0.0
    for seed in range(20):
        q = make_signal(np.random.default_rng(seed).standard_normal((10, 10000)), 100.0)
        worst = max(worst, dyca_eigenvalues(q)[0])
    assert worst <= 0.2


def test_shilnikov_mixture_has_two_near_unit_eigenvalues():
    spec = EmbeddingSpec.random(20, 3, seed=0)
    x = calibrated_sources(DEFAULT_SHILNIKOV, 3.0, 256.0)
    sigma = calibrated_noise_sigma(spec.mixing, DEFAULT_SHILNIKOV, 256.0, 20.0)
    q = embed(make_signal(x, 256.0), EmbeddingSpec(spec.mixing, sigma, 0))
    lam = dyca_fit(q).eigenvalues
    assert lam[0] >= 0.95 and lam[1] >= 0.95
    assert lam[2] <= lam[1] - 0.1


def test_component_count_clamping():
    q, _, _ = oscillator_signal(n_channels=4, duration=5.0)
    assert dyca_fit(q, DycaOptions(max_components=1)).m == 1
    assert dyca_fit(q, DycaOptions(min_components=3)).m == 3
    assert dyca_fit(q, DycaOptions(determinism_threshold=0.999)).m == 2


def test_derived_vector_methods_agree_when_c1_is_well_conditioned():
    q = random_signal(4, 5000, seed=1)
    opts = dict(determinism_threshold=0.01, min_components=4)
    a = dyca_fit(q, DycaOptions(**opts))
    b = dyca_fit(q, DycaOptions(v_method="c1_solve", **opts))
    np.testing.assert_allclose(a.v_vectors, b.v_vectors, rtol=1e-8, atol=1e-8 * np.abs(a.v_vectors).max())


def test_projection_vectors_are_u1_u2_v1():
    q, _, _ = oscillator_signal()
    model = dyca_fit(q)
    p = model.projection_vectors(3)
    np.testing.assert_array_equal(p[:, 0], model.u_vectors[:, 0])
    np.testing.assert_array_equal(p[:, 1], model.u_vectors[:, 1])
    np.testing.assert_array_equal(p[:, 2], model.v_vectors[:, 0])


def test_projection_vectors_with_one_component():
    q = random_signal(5, 2000, seed=2)
    model = dyca_fit(q, DycaOptions(determinism_threshold=0.99))
    assert model.m == 1
    p = model.projection_vectors(3)
    np.testing.assert_array_equal(p[:, 0], model.u_vectors[:, 0])
    np.testing.assert_array_equal(p[:, 1], model.u_vectors[:, 1])
    np.testing.assert_array_equal(p[:, 2], model.v_vectors[:, 0])


def test_fit_input_checks():
    with pytest.raises(InputError):
        dyca_fit(make_signal(np.random.default_rng(0).standard_normal((1, 50)), 1.0))
    with pytest.raises(TooFewSamples):
        dyca_fit(make_signal(np.random.default_rng(0).standard_normal((4, 7)), 1.0))


def test_constant_signal_is_degenerate():
    with pytest.raises(DegenerateCorrelation):
        dyca_fit(make_signal(np.ones((3, 50)), 1.0))


@pytest.mark.parametrize("kwargs", [
    dict(determinism_threshold=0.0), dict(determinism_threshold=1.0), dict(min_components=0),
    dict(min_components=3, max_components=2), dict(ridge_scale=-1.0), dict(v_method="inverse"),
])
def test_options_validation(kwargs):
    with pytest.raises(InputError):
        DycaOptions(**kwargs)


def test_rank_deficient_channels_are_regularized():
    q0 = random_signal(3, 2000, seed=4)
    data = np.vstack([q0.data, q0.data[0] + q0.data[1]])      # fourth channel is redundant
    model = dyca_fit(make_signal(data, q0.sample_rate_hz))
    assert model.diagnostics.c0_ridge > 0
    assert model.diagnostics.regularized
    assert np.all(np.isfinite(model.eigenvalues))


# -- cost function -----------------------------------------------------------------


def test_cost_vanishes_for_exact_linear_relation():
    fs = 1000.0
    t = np.arange(int(2 * np.pi * fs)) / fs
    q = make_signal(np.vstack([np.sin(t), np.cos(t)]), fs)
    dq = make_signal(np.vstack([np.cos(t), -np.sin(t)]), fs)
    assert cost_function([1.0, 0.0], [[0.0, 1.0]], [1.0], q, derivative=dq) == pytest.approx(0.0, abs=1e-15)


def test_cost_matches_naive_sums(rng):
    q = random_signal(3, 400, seed=5)
    dq = estimate_derivative(q)
    u, v1, v2 = rng.standard_normal((3, 3))
    a = [0.7, -1.2]
    num = den = 0.0
    for j in range(q.n_samples):
        y = sum(u[i] * dq.data[i, j] for i in range(3))
        z = sum(a[0] * v1[i] * q.data[i, j] + a[1] * v2[i] * q.data[i, j] for i in range(3))
        num += (y - z) ** 2
        den += y * y
    assert cost_function(u, [v1, v2], a, q) == pytest.approx(num / den, rel=1e-12)


def test_cost_at_eigenvectors_equals_one_minus_eigenvalue():
    q = random_signal(5, 2000, seed=6)
    dq = estimate_derivative(q)
    model = dyca_fit(q)
    raw = model.diagnostics.raw_eigenvalues
    x = q.data.T
    for i in range(q.n_channels):
        u = model.u_vectors[:, i]
        # inner minimiser from an independent time-domain least-squares fit
        w, *_ = np.linalg.lstsq(x, dq.data.T @ u, rcond=None)
        assert cost_function(u, [w], [1.0], q, derivative=dq) == pytest.approx(1 - raw[i], abs=1e-8)
        np.testing.assert_allclose(optimal_regression_vector(u, q), w, rtol=1e-6,
                                   atol=1e-9 * np.abs(w).max())


def test_minimiser_is_a_minimum(rng):
    q = random_signal(4, 1000, seed=7)
    u = rng.standard_normal(4)
    w = optimal_regression_vector(u, q)
    best = cost_function(u, [w], [1.0], q)
    for _ in range(10):
        assert cost_function(u, [w + 1e-3 * rng.standard_normal(4)], [1.0], q) > best


def test_cost_zero_denominator():
    q = make_signal(np.vstack([np.ones(20), np.arange(20.0)]), 1.0)
    with pytest.raises(ZeroDenominator):
        cost_function([1.0, 0.0], [[1.0, 0.0]], [1.0], q)


def test_cost_length_mismatch():
    q = random_signal(2, 50, seed=0)
    with pytest.raises(InputError):
        cost_function([1.0, 0.0], [[1.0, 0.0]], [1.0, 2.0], q)


def test_rayleigh_grid_search_reproduces_leading_eigenvalue():
    q = random_signal(3, 3000, seed=8)
    corr = correlation_matrices(q, estimate_derivative(q))
    a = corr.c1 @ np.linalg.inv(corr.c0) @ corr.c1.T
    b = corr.c2

    def rq(angles):
        th, ph = angles
        u = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
        return -(u @ a @ u) / (u @ b @ u)

    th, ph = np.meshgrid(np.linspace(0, np.pi, 181), np.linspace(0, 2 * np.pi, 361))
    vals = np.array([rq(p) for p in zip(th.ravel(), ph.ravel())])
    start = (th.ravel()[vals.argmin()], ph.ravel()[vals.argmin()])
    best = minimize(rq, start, method="Nelder-Mead", options=dict(xatol=1e-10, fatol=1e-14))
    assert -best.fun == pytest.approx(dyca_eigenvalues(q)[0], abs=1e-4)


# -- invariances --------------------------------------------------------------------


def test_eigenvalues_invariant_under_scaling():
    q = random_signal(5, 2000, seed=9)
    ref = dyca_eigenvalues(q)
    for alpha in (1e-3, -2.5, 1e4):
        scaled = make_signal(alpha * q.data, q.sample_rate_hz)
        np.testing.assert_allclose(dyca_eigenvalues(scaled), ref, atol=1e-10)


def test_eigenvalues_invariant_under_mixing_and_vectors_transform(rng):
    q = random_signal(5, 2000, seed=10)
    m = rng.standard_normal((5, 5)) + 3 * np.eye(5)
    mixed = make_signal(m @ q.data, q.sample_rate_hz)
    a, b = dyca_fit(q), dyca_fit(mixed)
    np.testing.assert_allclose(b.diagnostics.raw_eigenvalues, a.diagnostics.raw_eigenvalues, atol=1e-6)
    expected = np.linalg.solve(m.T, a.u_vectors[:, 0])
    got = b.u_vectors[:, 0]
    cos = abs(expected @ got) / (np.linalg.norm(expected) * np.linalg.norm(got))
    assert cos == pytest.approx(1.0, abs=1e-6)


# -- projection and linear coefficients -------------------------------------------


def test_project_identity_columns_select_channels(rng):
    q = make_signal(rng.standard_normal((4, 30)), 1.0)
    out = project(q, np.eye(4)[:, [2, 0]])
    np.testing.assert_array_equal(out.data, q.data[[2, 0]])


def test_project_recovers_sources_of_orthonormal_mixing(rng):
    w, _ = np.linalg.qr(rng.standard_normal((6, 3)))
    x = rng.standard_normal((3, 100))
    np.testing.assert_allclose(project(make_signal(w @ x, 1.0), w).data, x, atol=1e-12)


def test_project_non_orthonormal_basis_uses_least_squares(rng):
    w = rng.standard_normal((6, 3))
    x = rng.standard_normal((3, 100))
    np.testing.assert_allclose(project(make_signal(w @ x, 1.0), w).data, x, atol=1e-10)


def test_project_errors(rng):
    q = make_signal(rng.standard_normal((3, 10)), 1.0)
    with pytest.raises(ShapeMismatch):
        project(q, np.ones((4, 1)))
    with pytest.raises(RankDeficientBasis):
        project(q, np.ones((3, 2)))


def test_linear_coefficients_of_oscillator_amplitudes():
    fs = 1000.0
    t = np.arange(int(10 * fs)) / fs
    amps = make_signal(np.vstack([np.sin(t), np.cos(t)]), fs)
    lin = estimate_linear_coeffs(amps, 2)
    np.testing.assert_allclose(lin.coeffs, [[0.0, 1.0], [-1.0, 0.0]], atol=1e-3)


def test_linear_coefficients_of_constant_amplitudes_are_zero():
    lin = estimate_linear_coeffs(make_signal(np.ones((2, 50)), 1.0), 2)
    np.testing.assert_array_equal(lin.coeffs, 0.0)
    np.testing.assert_array_equal(lin.residual_ratios, 0.0)


def test_linear_coefficients_of_white_noise_explain_nothing():
    amps = make_signal(np.random.default_rng(11).standard_normal((3, 20000)), 100.0)
    lin = estimate_linear_coeffs(amps, 3)
    np.testing.assert_allclose(lin.residual_ratios, 1.0, atol=0.02)


def test_linear_coefficients_bad_m():
    with pytest.raises(InputError):
        estimate_linear_coeffs(make_signal(np.ones((2, 50)), 1.0), 3)


def test_orthonormalize_drops_dependent_columns(rng):
    a = rng.standard_normal((5, 2))
    basis, dropped = orthonormalize(np.column_stack([a, a @ [1.0, -2.0], np.zeros(5)]))
    assert basis.shape == (5, 2)
    assert dropped == (2, 3)
    np.testing.assert_allclose(basis.T @ basis, np.eye(2), atol=1e-12)
