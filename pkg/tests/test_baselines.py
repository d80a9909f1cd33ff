import numpy as np
import pytest
from scipy.linalg import subspace_angles

from dyca.baselines import (baseline_project, ica_fit, pca_fit, pca_inverse, rank_ica_components,
                            select_components)
from dyca.core import dyca_fit
from dyca.errors import KTooLarge, WhiteningFailed
from dyca.signal import make_signal
from dyca.synth import DEFAULT_SHILNIKOV, EmbeddingSpec, calibrated_noise_sigma, calibrated_sources, embed


def shilnikov_mixture(seed, n_channels=20, seconds=12.0, fs=256.0, snr_db=20.0):
    spec = EmbeddingSpec.random(n_channels, 3, seed)
    x = calibrated_sources(DEFAULT_SHILNIKOV, seconds, fs, transient_seconds=10.0 + seed)
    sigma = calibrated_noise_sigma(spec.mixing, DEFAULT_SHILNIKOV, fs, snr_db)
    return embed(make_signal(x, fs), EmbeddingSpec(spec.mixing, sigma, seed)), spec.mixing


# -- PCA ------------------------------------------------------------------------------


def test_pca_isotropic_variances_are_equal():
    q = make_signal(np.random.default_rng(0).standard_normal((4, 200000)), 1.0)
    var = pca_fit(q, 4).explained_variance
    assert var.max() / var.min() < 1.05


def test_pca_principal_axis_of_a_line():
    t = np.linspace(-1, 1, 5000)
    noise = 0.01 * np.random.default_rng(1).standard_normal((2, t.size))
    model = pca_fit(make_signal(np.vstack([t, 2 * t]) + noise, 1.0), 1)
    np.testing.assert_allclose(np.abs(model.components[:, 0]), np.array([1, 2]) / np.sqrt(5), atol=1e-3)


def test_pca_full_rank_round_trip(rng):
    q = make_signal(rng.standard_normal((5, 300)) + 3.0, 1.0)
    model = pca_fit(q, 5)
    back = pca_inverse(baseline_project(q, model, 5), model)
    np.testing.assert_allclose(back.data, q.data, atol=1e-10)


def test_pca_variance_bookkeeping(rng):
    q = make_signal(rng.standard_normal((6, 500)) * np.arange(1, 7)[:, None], 1.0)
    full = pca_fit(q, 6)
    assert full.explained_variance.sum() == pytest.approx(full.total_variance, rel=1e-8)
    part = pca_fit(q, 2)
    assert part.explained_variance.sum() <= part.total_variance + 1e-8
    np.testing.assert_array_equal(part.explained_variance, full.explained_variance[:2])


def test_pca_is_deterministic(rng):
    q = make_signal(rng.standard_normal((5, 300)), 1.0)
    np.testing.assert_array_equal(pca_fit(q, 3).components, pca_fit(q, 3).components)


def test_pca_k_out_of_range(rng):
    q = make_signal(rng.standard_normal((3, 30)), 1.0)
    with pytest.raises(KTooLarge):
        pca_fit(q, 4)
    with pytest.raises(KTooLarge):
        baseline_project(q, pca_fit(q, 2), 3)


# -- ICA ------------------------------------------------------------------------------


def _uniform_sources(rng, t=20000):
    return rng.uniform(-np.sqrt(3), np.sqrt(3), (2, t))


def _off_pattern(p):
    # normalise rows by their largest entry, then measure what is left off the permutation
    p = np.abs(p) / np.abs(p).max(axis=1, keepdims=True)
    return np.sort(p, axis=1)[:, :-1].max()


def test_ica_recovers_known_mixing(rng):
    mixing = np.array([[1.0, 0.5], [0.5, 1.0]])
    q = make_signal(mixing @ _uniform_sources(rng), 1.0)
    model = ica_fit(q, 2)
    assert model.converged
    assert _off_pattern(model.unmixing @ mixing) <= 0.05


def test_ica_on_independent_white_input_is_a_signed_permutation(rng):
    q = make_signal(_uniform_sources(rng), 1.0)
    model = ica_fit(q, 2)
    assert _off_pattern(model.unmixing) <= 0.05
    np.testing.assert_allclose(np.abs(model.unmixing).max(axis=1), 1.0, atol=0.05)


def test_ica_gaussian_sources_still_whitened(rng):
    q = make_signal(np.array([[2.0, 1.0], [0.0, 1.0]]) @ rng.standard_normal((2, 5000)), 1.0)
    model = ica_fit(q, 2, max_iter=50)
    out = baseline_project(q, model, 2).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(np.cov(out), np.eye(2), atol=1e-8)


def test_ica_outputs_are_uncorrelated_unit_variance():
    q, _ = shilnikov_mixture(0)
    model = ica_fit(q, 3)
    assert model.converged
    out = baseline_project(q, model, 3).data
    assert out.shape[0] == 3 and np.all(np.isfinite(out))
    cov = np.cov(out)
    np.testing.assert_allclose(np.diag(cov), 1.0, atol=1e-8)
    assert np.abs(cov - np.diag(np.diag(cov))).max() <= 1e-6


def test_ica_rotation_is_orthogonal_and_factorizes_unmixing(rng):
    q = make_signal(rng.laplace(size=(4, 3000)), 1.0)
    m = ica_fit(q, 3)
    np.testing.assert_allclose(m.rotation @ m.rotation.T, np.eye(3), atol=1e-10)
    np.testing.assert_allclose(m.unmixing, m.rotation @ m.whitening, atol=1e-12)


def test_ica_is_deterministic_given_seed(rng):
    q = make_signal(rng.laplace(size=(3, 2000)), 1.0)
    np.testing.assert_array_equal(ica_fit(q, 3, seed=4).unmixing, ica_fit(q, 3, seed=4).unmixing)


def test_ica_rank_deficient_input():
    x = np.random.default_rng(0).standard_normal(500)
    with pytest.raises(WhiteningFailed):
        ica_fit(make_signal(np.vstack([x, 2 * x]), 1.0), 2)


def test_ica_component_ranking_puts_event_source_first(rng):
    t = 4000
    s = rng.laplace(size=(3, t))
    s[2, 1000:1500] *= 8.0                           # third source carries the "event"
    q = make_signal(rng.standard_normal((3, 3)) @ s, 100.0)
    model = ica_fit(q, 3)
    order = rank_ica_components(q, model, [(10.0, 15.0)])
    best = select_components(model, order)
    src = baseline_project(q, best, 1).data[0]
    assert abs(np.corrcoef(src, s[2])[0, 1]) > 0.95


# -- comparison with DyCA -------------------------------------------------------------


def test_ica_three_components_on_shilnikov_mixture():
    q, _ = shilnikov_mixture(1)
    out = baseline_project(q, ica_fit(q, 3), 3).data
    assert out.shape == (3, q.n_samples)
    np.testing.assert_allclose(out.var(axis=1, ddof=1), 1.0, atol=1e-8)


@pytest.mark.xfail(strict=True, reason=(
    "with isotropic white noise the top-3 principal subspace is the near-optimal estimate of "
    "the source subspace; DyCA's [u1, u2, v1] is tilted by the noise whitening in C2"))
def test_dyca_subspace_closer_to_sources_than_pca():
    q, mixing = shilnikov_mixture(0)
    dyca = np.degrees(subspace_angles(dyca_fit(q).projection_vectors(3), mixing).max())
    pca = np.degrees(subspace_angles(pca_fit(q, 3).components, mixing).max())
    assert dyca < pca
