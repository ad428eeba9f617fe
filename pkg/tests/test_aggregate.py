import numpy as np
import pytest

from sparsema.aggregate import (AggregationError, cumulative_q, cumulative_q_matrix, ewa_exact,
                                ma_exact, predict)
from sparsema.models import Dataset, Dictionary, LossModel, coordinate_dictionary, q_value
from sparsema.prior import PriorConfig

REG = LossModel("reg-squared")

# three hand-written observations; stage means from adaptive scipy quadrature of
# the one-dimensional posterior, computed once and frozen
TINY = Dataset(np.array([[1.0], [-1.0], [1.0]]), np.array([0.8, -1.1, 0.3]))
TINY_PRIOR = PriorConfig(0.5, 2.0, 1)
TINY_BETA = 4.0
TINY_STAGES = [0.0, 0.05901303683782486, 0.12533885697310737, 0.12952924405472582]


def small_regression(rng, n=20, M=2, sigma=0.5):
    X = rng.choice([-1.0, 1.0], (n, M))
    lam = np.zeros(M)
    lam[0] = 1.0
    return Dataset(X, X @ lam + sigma * rng.standard_normal(n)), lam


def test_cumulative_q(rng):
    data, _ = small_regression(rng, n=6)
    d = coordinate_dictionary(2)
    lam = np.array([0.3, -0.1])
    assert cumulative_q(data, REG, d, lam, 0) == 0.0
    total = sum(q_value(REG, (data.X[i], data.y[i]), lam, d) for i in range(6))
    assert cumulative_q(data, REG, d, lam, 6) == pytest.approx(total, abs=1e-12)
    row = cumulative_q_matrix(data, REG, d, lam[None])[0]
    assert np.all(np.diff(row) >= 0)
    with pytest.raises(ValueError):
        cumulative_q(data, REG, d, lam, 7)


def test_quadrature_matches_frozen_oracle():
    d = coordinate_dictionary(1)
    res = ma_exact(TINY, REG, d, TINY_PRIOR, TINY_BETA, method="quadrature", grid_size=4001)
    np.testing.assert_allclose(res.diagnostics["stage_means"][:, 0], TINY_STAGES, atol=1e-6)
    assert res.lambda_hat[0] == pytest.approx(np.mean(TINY_STAGES), abs=1e-6)
    ewa = ewa_exact(TINY, REG, d, TINY_PRIOR, TINY_BETA, method="quadrature", grid_size=4001)
    assert ewa.lambda_hat[0] == pytest.approx(TINY_STAGES[-1], abs=1e-6)
    # all data push the same way, so the averaged aggregate shrinks harder
    assert abs(ewa.lambda_hat[0]) >= abs(res.lambda_hat[0])


def test_rejection_matches_quadrature_m1(rng):
    data, _ = small_regression(rng, n=5, M=1)
    d = coordinate_dictionary(1)
    cfg = PriorConfig(0.5, 2.0, 1)
    quad = ma_exact(data, REG, d, cfg, 18.5, method="quadrature", grid_size=4001)
    rej = ma_exact(data, REG, d, cfg, 18.5, budget=100_000, rng=rng)
    se = rej.diagnostics["standard_error"]
    assert np.all(np.abs(quad.lambda_hat - rej.lambda_hat) <= 3 * se)


def test_n_zero_gives_prior_mean(rng):
    data = Dataset(np.zeros((0, 2)), np.zeros(0))
    cfg = PriorConfig(0.25, 2.0, 2)
    q = ma_exact(data, REG, coordinate_dictionary(2), cfg, 1.0, method="quadrature")
    np.testing.assert_allclose(q.lambda_hat, 0.0, atol=1e-12)
    r = ma_exact(data, REG, coordinate_dictionary(2), cfg, 1.0, budget=50_000, rng=rng)
    assert np.all(np.abs(r.lambda_hat) <= 4 * r.diagnostics["standard_error"] + 1e-12)
    e = ewa_exact(data, REG, coordinate_dictionary(2), cfg, 1.0, method="quadrature")
    np.testing.assert_allclose(e.lambda_hat, 0.0, atol=1e-12)


def test_flat_likelihood_gives_prior_mean(rng):
    data, _ = small_regression(rng)
    q = ma_exact(data, REG, coordinate_dictionary(2), PriorConfig(0.25, 2.0, 2), 1e12,
                 method="quadrature")
    np.testing.assert_allclose(q.lambda_hat, 0.0, atol=1e-9)


def test_ewa_is_last_stage_of_ma(rng):
    data, _ = small_regression(rng)
    d, cfg = coordinate_dictionary(2), PriorConfig(0.25, 2.0, 2)
    ma = ma_exact(data, REG, d, cfg, 5.0, budget=20_000, rng=np.random.default_rng(4))
    ewa = ewa_exact(data, REG, d, cfg, 5.0, budget=20_000, rng=np.random.default_rng(4))
    np.testing.assert_allclose(ewa.lambda_hat, ma.diagnostics["stage_means"][-1], rtol=1e-12,
                               atol=1e-15)


@pytest.mark.parametrize("method", ["quadrature", "rejection"])
def test_result_in_ball_and_weights_normalized(rng, method):
    data, _ = small_regression(rng)
    cfg = PriorConfig(0.25, 0.6, 2)
    res = ma_exact(data, REG, coordinate_dictionary(2), cfg, 0.5, method=method,
                   budget=20_000, rng=rng)
    assert np.abs(res.lambda_hat).sum() <= cfg.radius + 1e-9
    np.testing.assert_allclose(res.diagnostics["weight_sums"], 1.0, atol=1e-12)
    assert np.all(res.diagnostics["ess"] >= 1.0)


def test_permutation_equivariance(rng):
    data, _ = small_regression(rng)
    d, cfg = coordinate_dictionary(2), PriorConfig(0.25, 2.0, 2)
    base = ma_exact(data, REG, d, cfg, 3.0, method="quadrature")
    swapped = Dataset(data.X[:, ::-1], data.y)
    perm = ma_exact(swapped, REG, d, cfg, 3.0, method="quadrature")
    np.testing.assert_allclose(perm.lambda_hat, base.lambda_hat[::-1], atol=1e-12)


def test_scale_invariance_quadrature(rng):
    data, _ = small_regression(rng)
    s = 3.0
    base = ma_exact(data, REG, coordinate_dictionary(2), PriorConfig(0.25, 2.0, 2), 18.5,
                    method="quadrature")
    ds = Dictionary("coordinate", 2, s, scale=np.full(2, s))
    scaled = ma_exact(data, REG, ds, PriorConfig(0.25 / s, 2.0 / s, 2), 18.5,
                      method="quadrature")
    np.testing.assert_allclose(scaled.lambda_hat, base.lambda_hat / s, atol=1e-8)


def test_later_stages_get_closer_to_truth():
    rng = np.random.default_rng(7)
    gain = []
    for _ in range(100):
        data, lam = small_regression(rng, n=20)
        res = ma_exact(data, REG, coordinate_dictionary(2), PriorConfig(0.25, 2.0, 2), 2.0,
                       method="quadrature", grid_size=201)
        means = res.diagnostics["stage_means"]
        gain.append(np.linalg.norm(means[0] - lam) - np.linalg.norm(means[-1] - lam))
    gain = np.array(gain)
    assert gain.mean() - 3 * gain.std(ddof=1) / np.sqrt(gain.size) > 0


def test_method_gates(rng):
    data, _ = small_regression(rng, M=3)
    d = coordinate_dictionary(3)
    with pytest.raises(AggregationError):
        ma_exact(data, REG, d, PriorConfig(0.1, 1.0, 3), 1.0, method="quadrature")
    with pytest.raises(AggregationError):
        ma_exact(data, REG, d, PriorConfig(0.1, 1.0, 3, alpha=0.5), 1.0, rng=rng)
    with pytest.raises(ValueError):
        ma_exact(data, REG, d, PriorConfig(0.1, 1.0, 3), 1.0)  # no rng
    with pytest.raises(ValueError):
        ma_exact(data, REG, coordinate_dictionary(2), PriorConfig(0.1, 1.0, 3), 1.0, rng=rng)
    big = Dataset(rng.choice([-1.0, 1.0], (5, 9)), np.zeros(5))
    with pytest.raises(AggregationError):
        ma_exact(big, REG, coordinate_dictionary(9), PriorConfig(0.01, 1.0, 9), 1.0, rng=rng)


def test_weights_underflow_is_reported():
    # every node has residual >= 16, so every log-weight overflows to -inf
    data = Dataset(np.array([[1.0]]), np.array([5.0]))
    with pytest.raises(AggregationError, match="stage"):
        ma_exact(data, REG, coordinate_dictionary(1), PriorConfig(0.5, 1.0, 1), 1e-310,
                 method="quadrature")


def test_predict_linearity(rng):
    d = coordinate_dictionary(3)
    x = rng.uniform(-1, 1, (10, 3))
    np.testing.assert_array_equal(predict(d, np.zeros(3), x), 0.0)
    np.testing.assert_array_equal(predict(d, np.eye(3)[0], x), x[:, 0])
    a, b = rng.standard_normal(3), rng.standard_normal(3)
    np.testing.assert_allclose(predict(d, a + b, x), predict(d, a, x) + predict(d, b, x),
                               atol=1e-12)


def test_to_dict_serializes(rng):
    data, _ = small_regression(rng)
    res = ma_exact(data, REG, coordinate_dictionary(2), PriorConfig(0.25, 2.0, 2), 3.0,
                   method="quadrature", grid_size=101)
    out = res.to_dict()
    assert out["method"] == "quadrature"
    assert len(out["diagnostics"]["stage_means"]) == data.n + 1
