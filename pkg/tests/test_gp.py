import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamopt import gp
from beamopt.domain import BeamGrid, BeamPair
from beamopt.gp import (
    GpFitError,
    GpHyperparams,
    featurize,
    featurize_grid,
    fit,
    kernel_matrix,
    log_marginal_likelihood,
    matern52,
    matern_kernel,
    predict,
)
from helpers import dense_lml, dense_posterior, oracle_gram, random_features, rel_err

G = BeamGrid.default()


def test_featurize_examples():
    grid = BeamGrid.from_ranges(-45.0, 45.0, 3, -180.0, 45.0, 8)
    np.testing.assert_allclose(featurize(grid, BeamPair(1, 6)), [0, 1, 1, 0], atol=1e-15)
    h = math.sqrt(2) / 2
    np.testing.assert_allclose(featurize(grid, BeamPair(2, 3)), [h, h, -h, h], atol=1e-15)


def test_featurize_seam_is_continuous():
    from beamopt.gp import featurize_angles

    np.testing.assert_allclose(featurize_angles(10.0, -180.0), featurize_angles(10.0, 180.0), atol=1e-15)


def test_feature_vectors_on_unit_circles():
    F = featurize_grid(G)
    assert F.shape == (684, 4)
    np.testing.assert_allclose(F[:, 0] ** 2 + F[:, 1] ** 2, 1.0, atol=1e-12)
    np.testing.assert_allclose(F[:, 2] ** 2 + F[:, 3] ** 2, 1.0, atol=1e-12)
    np.testing.assert_array_equal(F[G.flat(BeamPair(3, 7))], featurize(G, BeamPair(3, 7)))


def test_matern_self_similarity():
    a = np.array([0.1, 0.2, 0.3, 0.4])
    assert matern_kernel(a, a, GpHyperparams(2.0, 0.5, 0.01)) == 2.0


def test_matern_at_length_scale_high_precision():
    mpmath.mp.dps = 30
    s = mpmath.sqrt(5)
    ref = (1 + s + mpmath.mpf(5) / 3) * mpmath.exp(-s)
    assert str(ref).startswith("0.52399")
    a = np.zeros(4)
    b = np.array([0.7, 0.0, 0.0, 0.0])
    got = matern_kernel(a, b, GpHyperparams(1.0, 0.7, 0.01))
    assert abs(got - float(ref)) < 1e-15


def test_matern_decays_monotonically():
    r = np.linspace(0, 50, 2001)
    k = matern52(r, 0.5, 1.0)
    assert np.all(np.diff(k) < 0)
    assert 0 < k[-1] < 1e-40


@settings(max_examples=200)
@given(
    st.lists(st.floats(-1, 1), min_size=4, max_size=4),
    st.lists(st.floats(-1, 1), min_size=4, max_size=4),
    st.floats(0.01, 10),
    st.floats(0.01, 10),
)
def test_matern_symmetric(a, b, ell, sf2):
    h = GpHyperparams(sf2, ell, 0.1)
    assert matern_kernel(a, b, h) == pytest.approx(matern_kernel(b, a, h), rel=1e-14, abs=0)


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        GpHyperparams(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        GpHyperparams(1.0, float("inf"), 1.0)
    assert GpHyperparams().matern_nu == 2.5


def test_single_point_noiseless_interpolates():
    X = random_features(np.random.default_rng(0), 1)
    m = fit(X, [-12.5], GpHyperparams(1.0, 0.5, 1e-10))
    mu, sd = predict(m, X)
    assert abs(mu[0] - (-12.5)) < 1e-4
    assert sd[0] < 1e-4


def test_single_point_scalar_solve():
    X = random_features(np.random.default_rng(1), 1)
    h = GpHyperparams(0.8, 0.5, 0.2)
    ys = np.array([1.3])
    m = gp._fit_standardized(X, ys, -20.0, 4.0, h)
    mu, _ = predict(m, X)
    assert mu[0] == pytest.approx(-20.0 + 4.0 * (0.8 / (0.8 + 0.2)) * 1.3, rel=1e-14)


def test_far_query_recovers_prior():
    rng = np.random.default_rng(2)
    X = random_features(rng, 10)
    y = rng.normal(-30, 6, 10)
    h = GpHyperparams(1.5, 0.05, 0.01)
    m = fit(X, y, h)
    far = np.array([[5.0, 5.0, 5.0, 5.0]])
    mu, sd = predict(m, far)
    assert mu[0] == pytest.approx(m.y_mean, abs=1e-9)
    assert sd[0] == pytest.approx(m.y_scale * math.sqrt(1.5), rel=1e-9)


def test_constant_targets_use_unit_scale():
    X = random_features(np.random.default_rng(3), 5)
    m = fit(X, [7.0] * 5, GpHyperparams())
    assert m.y_scale == 1.0 and m.y_mean == 7.0
    np.testing.assert_allclose(m.y_std, 0.0)


@pytest.mark.parametrize("seed", range(20))
def test_posterior_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 51))
    X = random_features(rng, n)
    y = rng.normal(-40, 8, n)
    sf2, ell, sn2 = rng.uniform(0.2, 5), rng.uniform(0.1, 2.0), 10 ** rng.uniform(-3, 0)
    Xq = random_features(rng, 25)
    m = fit(X, y, GpHyperparams(sf2, ell, sn2))
    mu, sd = predict(m, Xq)
    mu_o, sd_o = dense_posterior(X, y, sf2, ell, sn2, Xq)
    assert rel_err(mu, mu_o) <= 1e-8
    assert rel_err(sd, sd_o) <= 1e-8


def test_cholesky_reconstructs_kernel():
    rng = np.random.default_rng(4)
    X = random_features(rng, 30)
    h = GpHyperparams(2.0, 0.4, 0.05)
    m = fit(X, rng.normal(size=30), h)
    K = oracle_gram(X, X, 2.0, 0.4) + 0.05 * np.eye(30)
    assert np.linalg.norm(m.chol @ m.chol.T - K) / np.linalg.norm(K) <= 1e-8
    assert np.allclose(np.triu(m.chol, 1), 0)


def test_posterior_variance_bounded_by_prior():
    rng = np.random.default_rng(5)
    X = random_features(rng, 25)
    m = fit(X, rng.normal(size=25), GpHyperparams(1.3, 0.6, 0.02))
    _, sd = predict(m, featurize_grid(G))
    assert np.all(sd <= m.y_scale * math.sqrt(1.3) * (1 + 1e-12))


def test_noise_inflates_predictive_std():
    rng = np.random.default_rng(6)
    X = random_features(rng, 10)
    m = fit(X, rng.normal(size=10), GpHyperparams(1.0, 0.5, 0.1))
    _, s0 = predict(m, X, standardized=True)
    _, s1 = predict(m, X, standardized=True, include_noise=True)
    np.testing.assert_allclose(s1**2, s0**2 + 0.1, rtol=1e-12)


def test_duplicate_points_need_jitter_or_noise():
    X = np.repeat(random_features(np.random.default_rng(7), 1), 3, axis=0)
    m = fit(X, [1.0, 2.0, 3.0], GpHyperparams(1.0, 0.5, 1e-20))
    assert m.jitter > 0
    with pytest.raises(GpFitError):
        gp._factor(np.array([[1.0, 2.0], [2.0, 1.0]]), 1.0)


# ---------------------------------------------------------------------------
# log marginal likelihood
# ---------------------------------------------------------------------------


def test_lml_closed_form_zero_target():
    X = random_features(np.random.default_rng(8), 1)
    m = gp._fit_standardized(X, np.array([0.0]), 0.0, 1.0, GpHyperparams(0.75, 0.5, 0.25))
    assert log_marginal_likelihood(m) == pytest.approx(-0.9189385332046727, abs=1e-12)
    assert log_marginal_likelihood(m) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)


def test_lml_closed_form_unit_target():
    X = random_features(np.random.default_rng(9), 1)
    m = gp._fit_standardized(X, np.array([1.0]), 0.0, 1.0, GpHyperparams(0.75, 0.5, 0.25))
    assert log_marginal_likelihood(m) == pytest.approx(-1.4189385332046727, abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_lml_matches_determinant_oracle(seed):
    rng = np.random.default_rng(100 + seed)
    X = random_features(rng, 10)
    y = rng.normal(-20, 5, 10)
    sf2, ell, sn2 = rng.uniform(0.2, 5), rng.uniform(0.1, 2.0), 10 ** rng.uniform(-3, 0)
    got = log_marginal_likelihood(fit(X, y, GpHyperparams(sf2, ell, sn2)))
    assert abs(got - dense_lml(X, y, sf2, ell, sn2)) <= 1e-8


# ---------------------------------------------------------------------------
# hyperparameter optimization
# ---------------------------------------------------------------------------


def _lml(X, y, h):
    return log_marginal_likelihood(fit(X, y, h))


def test_optimizer_below_two_points_returns_h0():
    h0 = GpHyperparams(2.0, 0.3, 0.1)
    X = random_features(np.random.default_rng(0), 1)
    assert gp.optimize_hyperparams(X, [1.0], h0) is h0


def test_optimizer_from_optimum_is_no_worse():
    rng = np.random.default_rng(11)
    X = random_features(rng, 30)
    y = rng.normal(size=30)
    h1 = gp.optimize_hyperparams(X, y, GpHyperparams(), restarts=3, rng=0)
    h2 = gp.optimize_hyperparams(X, y, h1, restarts=3, rng=1)
    assert _lml(X, y, h2) >= _lml(X, y, h1) - 1e-12


def test_optimizer_constant_targets():
    X = random_features(np.random.default_rng(12), 8)
    h = gp.optimize_hyperparams(X, [3.0] * 8, GpHyperparams(), restarts=2, rng=0)
    assert isinstance(h, GpHyperparams)


def test_optimizer_is_deterministic_given_rng():
    rng = np.random.default_rng(13)
    X = random_features(rng, 20)
    y = rng.normal(size=20)
    a = gp.optimize_hyperparams(X, y, GpHyperparams(), restarts=3, rng=5)
    b = gp.optimize_hyperparams(X, y, GpHyperparams(), restarts=3, rng=5)
    assert a == b


def test_optimizer_stays_in_bounds():
    rng = np.random.default_rng(14)
    X = random_features(rng, 25)
    for y in (rng.normal(size=25), np.sin(7 * X[:, 2]) + 1e-3 * rng.normal(size=25)):
        h = gp.optimize_hyperparams(X, y, GpHyperparams(), restarts=4, rng=0)
        lo, hi = gp.HYPER_BOUNDS
        for v in (h.signal_variance, h.length_scale, h.noise_variance):
            assert lo * (1 - 1e-9) <= v <= hi * (1 + 1e-9)


def test_optimizer_recovers_prior_length_scale():
    """Data drawn from the prior with a known length scale; the optimizer's
    scale is within a factor 2 and its LML beats a dense grid scan."""
    rng = np.random.default_rng(15)
    n, ell = 60, 0.8
    X = random_features(rng, n)
    K = oracle_gram(X, X, 1.0, ell) + 1e-2 * np.eye(n)
    y = np.linalg.cholesky(K) @ rng.normal(size=n)
    h = gp.optimize_hyperparams(X, y, GpHyperparams(), restarts=3, rng=0)
    assert ell / 2 <= h.length_scale <= ell * 2
    best_scan = max(
        _lml(X, y, GpHyperparams(s, l, e))
        for s in np.geomspace(0.1, 10, 9)
        for l in np.geomspace(0.1, 5, 13)
        for e in np.geomspace(1e-3, 1, 7)
    )
    assert _lml(X, y, h) >= best_scan - 1e-6


def test_optimizer_warns_when_every_start_fails(monkeypatch):
    X = random_features(np.random.default_rng(16), 5)

    def broken(*a, **k):
        raise GpFitError("boom")

    monkeypatch.setattr(gp, "_factor", broken)
    monkeypatch.setattr(gp, "dpotrf", lambda *a, **k: (a[0], 1))
    h0 = GpHyperparams()
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        h = gp.optimize_hyperparams.fn(X, np.arange(5.0), h0, restarts=1, rng=0)
    assert h is h0
    assert any(issubclass(x.category, gp.HyperoptWarning) for x in w)


def test_kernel_matrix_matches_oracle():
    rng = np.random.default_rng(17)
    A, B = random_features(rng, 7), random_features(rng, 5)
    h = GpHyperparams(1.7, 0.3, 0.1)
    np.testing.assert_allclose(kernel_matrix(A, B, h), oracle_gram(A, B, 1.7, 0.3), rtol=1e-13, atol=1e-300)
