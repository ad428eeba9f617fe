import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from sparsema.prior import (PriorConfig, PriorSamplingError, grad_log_density, huber,
                            huber_grad, log_density_unnorm, sample, sample_counting,
                            tail_mass_bound)

from conftest import fd_grad


def test_config_validation():
    with pytest.raises(ValueError):
        PriorConfig(0.0, 1.0, 2)
    with pytest.raises(ValueError):
        PriorConfig(0.1, -1.0, 2)
    with pytest.raises(ValueError):
        PriorConfig(0.1, 1.0, 0)
    with pytest.raises(ValueError):
        PriorConfig(0.1, 1.0, 2, alpha=-1)
    assert PriorConfig(0.1, 1.0, 2).admits_soi
    assert not PriorConfig(0.3, 1.0, 2).admits_soi


@pytest.mark.parametrize("t, expected", [(0.0, 0.0), (0.5, 0.25), (2.0, 3.0), (-2.0, 3.0)])
def test_huber_values(t, expected):
    assert huber(t) == pytest.approx(expected)


@given(st.floats(-50, 50, allow_nan=False))
def test_huber_is_c1(t):
    h = 1e-7
    np.testing.assert_allclose((huber(t + h) - huber(t - h)) / (2 * h), huber_grad(t),
                               atol=1e-5)


def test_log_density_examples():
    assert log_density_unnorm(np.zeros(2), PriorConfig(1.0, 5.0, 2)) == 0.0
    v = log_density_unnorm(np.array([1.0, 0.0]), PriorConfig(1.0, 5.0, 2, alpha=1.0))
    assert v == pytest.approx(-2 * np.log(2) - 1)
    cfg = PriorConfig(0.2, 1.0, 2)
    assert log_density_unnorm(np.array([0.6, 0.5]), cfg) == -np.inf
    with pytest.raises(ValueError):
        log_density_unnorm(np.zeros(3), cfg)


def test_log_density_stack():
    cfg = PriorConfig(0.3, 1.0, 2)
    lams = np.array([[0.1, 0.2], [0.9, 0.9]])
    out = log_density_unnorm(lams, cfg)
    assert out.shape == (2,)
    assert out[1] == -np.inf
    assert out[0] == pytest.approx(log_density_unnorm(lams[0], cfg))


@settings(max_examples=50)
@given(st.lists(st.floats(-0.4, 0.4), min_size=3, max_size=3), st.permutations([0, 1, 2]),
       st.lists(st.sampled_from([-1.0, 1.0]), min_size=3, max_size=3))
def test_log_density_symmetries(v, perm, signs):
    cfg = PriorConfig(0.2, 1.5, 3, alpha=0.8)
    lam = np.array(v)
    base = log_density_unnorm(lam, cfg)
    np.testing.assert_allclose(log_density_unnorm(lam[perm] * np.array(signs), cfg), base,
                               rtol=1e-13)


@pytest.mark.parametrize("alpha", [0.0, 0.5, 3.0])
def test_gradient_matches_finite_differences(rng, alpha):
    cfg = PriorConfig(0.25, 2.0, 3, alpha)
    for _ in range(100):
        v = rng.standard_normal(3)
        lam = v / np.abs(v).sum() * rng.uniform(0.01, 1.9)
        g = grad_log_density(lam, cfg)
        fd = fd_grad(lambda x: log_density_unnorm(x, cfg), lam)
        assert np.max(np.abs(g - fd)) <= 1e-6 * max(np.max(np.abs(fd)), 1.0)


def test_gradient_zero_and_boundary():
    cfg = PriorConfig(0.3, 1.0, 2, alpha=1.0)
    np.testing.assert_array_equal(grad_log_density(np.zeros(2), cfg), np.zeros(2))
    with pytest.raises(ValueError):
        grad_log_density(np.array([0.5, 0.5]), cfg)


def test_samples_stay_in_ball(rng):
    cfg = PriorConfig(0.3, 1.0, 3)
    draws = sample(cfg, rng, 5000)
    assert draws.shape == (5000, 3)
    assert np.all(np.abs(draws).sum(axis=1) <= 1.0)
    assert sample(cfg, rng).shape == (3,)


def test_sample_mean_is_zero(rng):
    M, tau = 2, 0.1
    lam1 = sample(PriorConfig(tau, 100 * M * tau, M), rng, 100_000)[:, 0]
    assert abs(lam1.mean()) <= 3 * lam1.std() / np.sqrt(lam1.size)


def test_unit_second_moment_of_coordinate_law():
    dens = lambda u: 2 / (np.pi * (1 + u**2) ** 2)
    assert integrate.quad(dens, -np.inf, np.inf)[0] == pytest.approx(1.0, abs=1e-10)
    assert integrate.quad(lambda u: u**2 * dens(u), -np.inf, np.inf)[0] == pytest.approx(
        1.0, abs=1e-8)


def test_sample_second_moment(rng):
    # U^2 has infinite variance, so compare a truncated moment (finite variance)
    # with its quadrature value at 3 standard errors
    M, tau, c = 2, 0.1, 10.0
    u = sample(PriorConfig(tau, 100 * M * tau, M), rng, 100_000)[:, 0] / tau
    vals = np.where(np.abs(u) <= c, u**2, 0.0)
    exact = integrate.quad(lambda x: x**2 * 2 / (np.pi * (1 + x**2) ** 2), -c, c)[0]
    assert abs(vals.mean() - exact) <= 3 * vals.std() / np.sqrt(vals.size)


def test_marginal_law_is_scaled_t3(rng):
    tau = 0.7
    draws = sample(PriorConfig(tau, 1e9, 1), rng, 20_000)[:, 0]
    ks = stats.kstest(draws, stats.t(3, scale=tau / np.sqrt(3)).cdf)
    assert ks.pvalue > 0.01


def test_selfnormalized_mc_matches_quadrature_m1(rng):
    cfg = PriorConfig(0.4, 1.0, 1)
    test_fn = lambda x: np.cos(3 * x)  # bounded and even
    dens = lambda x: (cfg.tau**2 + x**2) ** -2
    num = integrate.quad(lambda x: test_fn(x) * dens(x), -1, 1, points=[0])[0]
    den = integrate.quad(dens, -1, 1, points=[0])[0]
    draws = sample(cfg, rng, 100_000)[:, 0]
    assert test_fn(draws).mean() == pytest.approx(num / den, rel=0.01)


def test_sampling_cap():
    cfg = PriorConfig(1.0, 1e-3, 5)
    with pytest.raises(PriorSamplingError):
        sample_counting(cfg, np.random.default_rng(0), 10, max_attempts_per_sample=10)
    with pytest.raises(ValueError):
        sample(PriorConfig(1.0, 1.0, 2, alpha=0.5), np.random.default_rng(0))


def test_tail_bound_examples(rng):
    assert tail_mass_bound(1, 3) == 0.25
    with pytest.raises(ValueError):
        tail_mass_bound(2, 2)
    u = sample(PriorConfig(1.0, 1e12, 3), rng, 100_000)
    p = np.mean(np.abs(u).sum(axis=1) >= 10)
    assert p <= 3 / 49
