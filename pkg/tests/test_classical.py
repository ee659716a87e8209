import numpy as np
import pytest

from tgl.classical import (
    ArimaModel, KalmanModel, VarModel, arima_fit, arima_forecast, discount_weights,
    discounted_polyfit, exp_smooth_estimate, kalman_filter, kalman_predict, kalman_update, linfit,
    ml_map_estimate, var_fit, var_forecast,
)
from tgl.errors import NumericError, ShapeError


def planted_ar1(phi, T, sigma, seed):
    rng = np.random.default_rng(seed)
    y = np.zeros(T)
    for t in range(1, T):
        y[t] = phi * y[t - 1] + sigma * rng.standard_normal()
    return y


def planted_var1(Phi, delta, y0, T):
    Y = [np.asarray(y0, dtype=float)]
    for _ in range(T - 1):
        Y.append(delta + Phi @ Y[-1])
    return np.array(Y)


def grid_bayes_filter(obs, q, r, m0, p0, grid):
    """Brute-force Bayes filter for x_t = x_{t-1} + N(0, q), y_t = x_t + N(0, r)."""
    dx = grid[1] - grid[0]
    dens = np.exp(-0.5 * (grid - m0) ** 2 / p0)
    dens /= dens.sum() * dx
    kernel = np.exp(-0.5 * (grid[:, None] - grid[None, :]) ** 2 / q) / np.sqrt(2 * np.pi * q)
    out = []
    for y in obs:
        dens = kernel @ dens * dx
        dens *= np.exp(-0.5 * (y - grid) ** 2 / r)
        dens /= dens.sum() * dx
        mean = np.sum(grid * dens) * dx
        out.append((mean, np.sum((grid - mean) ** 2 * dens) * dx))
    return np.array(out)


class TestLeastSquares:
    def test_exact_line(self):
        x = np.arange(5.0)
        X = np.column_stack([np.ones(5), x])
        np.testing.assert_allclose(linfit(X, 2 * x), [0, 2], atol=1e-10)

    def test_planted_recovery_and_orthogonality(self, rng):
        w = np.array([0.5, -1.0, 2.0])
        X = np.column_stack([np.ones(200), rng.standard_normal((200, 2))])
        y = X @ w + 0.01 * rng.standard_normal(200)
        w_hat = linfit(X, y)
        assert np.all(np.abs(w_hat - w) < 0.01)
        assert np.abs(X.T @ (y - X @ w_hat)).max() < 1e-8

    def test_singular_design_uses_pseudo_inverse(self):
        x = np.arange(6.0)
        X = np.column_stack([np.ones(6), x, 2 * x])
        w = linfit(X, 3 * x)
        np.testing.assert_allclose(X @ w, 3 * x, atol=1e-8)
        np.testing.assert_allclose(w, np.linalg.pinv(X) @ (3 * x), atol=1e-8)

    def test_errors(self):
        with pytest.raises(ValueError):
            linfit(np.zeros((0, 2)), np.zeros(0))
        with pytest.raises(ShapeError):
            linfit(np.ones((3, 2)), np.ones(4))
        with pytest.raises(ValueError):
            linfit(np.ones((1, 2)), np.ones(1))


class TestSmoothing:
    def test_constant_series(self):
        theta, T = 0.6, 9
        assert exp_smooth_estimate(np.full(T, 2.5), theta) == pytest.approx(2.5 * (1 - theta ** T))

    def test_limits(self, rng):
        y = rng.standard_normal(7)
        assert exp_smooth_estimate(y, 1e-12) == pytest.approx(y[-1])
        assert exp_smooth_estimate(y[:1], 0.3) == pytest.approx(0.7 * y[0])
        with pytest.raises(ValueError):
            exp_smooth_estimate(y, 1.0)

    def test_linear_and_geometric(self, rng):
        a, b = rng.standard_normal(6), rng.standard_normal(6)
        assert exp_smooth_estimate(2 * a + b, 0.4) == pytest.approx(
            2 * exp_smooth_estimate(a, 0.4) + exp_smooth_estimate(b, 0.4))
        w = discount_weights(6, 0.4)
        np.testing.assert_allclose(w[:-1] / w[1:], 0.4)
        assert (1 - 0.4) * w.sum() == pytest.approx(1 - 0.4 ** 6)

    def test_polyfit_exact_line(self):
        t = np.arange(1, 11)
        np.testing.assert_allclose(discounted_polyfit(3 + 0.5 * t, 0.8, 1), [3, 0.5], atol=1e-9)

    def test_polyfit_order_zero_is_weighted_mean(self, rng):
        y = rng.standard_normal(8)
        w = discount_weights(8, 0.7)
        assert discounted_polyfit(y, 0.7, 0)[0] == pytest.approx(w @ y / w.sum())

    def test_polyfit_unit_discount_limit(self, rng):
        y = rng.standard_normal(12)
        t = np.arange(1, 13)
        plain = np.polyfit(t, y, 2)[::-1] * np.array([1, 1, 2])
        np.testing.assert_allclose(discounted_polyfit(y, 1 - 1e-9, 2), plain, atol=1e-6)

    def test_polyfit_rank(self):
        with pytest.raises(ValueError):
            discounted_polyfit([1.0, 2.0], 0.5, 2)


class TestArima:
    def test_planted_ar1(self):
        model = arima_fit(planted_ar1(0.7, 2000, 0.1, 0), 1, 0, 0)
        assert abs(model.phi[0] - 0.7) < 0.05
        assert model.sigma2 >= 0

    def test_linear_trend_difference(self):
        y = 5 + 2 * np.arange(40.0)
        model = arima_fit(y, 0, 1, 0)
        assert model.delta == pytest.approx(2.0)
        np.testing.assert_allclose(arima_forecast(model, y, 3), [85, 87, 89], atol=1e-8)

    def test_white_noise_mean(self, rng):
        y = 3 + rng.standard_normal(100)
        model = arima_fit(y, 0, 0, 0)
        assert model.delta == pytest.approx(y.mean())
        np.testing.assert_allclose(arima_forecast(model, y, 2), y.mean())

    @pytest.mark.parametrize("phi,theta", [(0.7, -0.4), (-0.5, 0.5)])
    def test_arma_recovery(self, phi, theta):
        # MA enters with a minus sign: y_t = phi y_{t-1} + e_t - theta e_{t-1}
        rng = np.random.default_rng(5)
        e = rng.standard_normal(3000)
        y = np.zeros(3000)
        for t in range(1, 3000):
            y[t] = phi * y[t - 1] + e[t] - theta * e[t - 1]
        model = arima_fit(y, 1, 0, 1)
        assert abs(model.phi[0] - phi) < 0.05 and abs(model.theta[0] - theta) < 0.05

    def test_guard_and_json(self):
        with pytest.raises(ValueError):
            arima_fit(np.zeros(15), 1, 0, 0)
        model = arima_fit(planted_ar1(0.5, 200, 1.0, 1), 2, 1, 1)
        back = ArimaModel.from_json(model.to_json())
        np.testing.assert_array_equal(back.phi, model.phi)
        assert len(model.phi) == 3

    def test_forecast_errors(self):
        model = arima_fit(planted_ar1(0.5, 200, 1.0, 1), 1, 0, 0)
        with pytest.raises(ValueError):
            arima_forecast(model, np.ones(5), 0)


class TestVar:
    def test_noise_free_recovery(self):
        Phi = np.array([[0.5, 0.2], [-0.3, 0.4]])
        delta = np.array([1.0, -0.5])
        Y = planted_var1(Phi, delta, [3.0, -2.0], 60)
        model = var_fit(Y, 1)
        np.testing.assert_allclose(model.Phi[0], Phi, atol=1e-8)
        np.testing.assert_allclose(model.delta, delta, atol=1e-8)
        np.testing.assert_allclose(var_forecast(model, Y, 4), planted_var1(Phi, delta, Y[-1], 5)[1:], atol=1e-8)

    def test_power_forecast(self, rng):
        Phi = np.array([[0.6, 0.1], [0.2, 0.3]])
        model = VarModel(1, np.zeros(2), Phi[None], np.eye(2))
        y = rng.standard_normal(2)
        out = var_forecast(model, y[None], 5)
        np.testing.assert_allclose(out[-1], np.linalg.matrix_power(Phi, 5) @ y, atol=1e-14)

    def test_univariate_matches_arima(self):
        y = planted_ar1(0.6, 300, 1.0, 2)
        v = var_fit(y[:, None], 1)
        a = arima_fit(y, 1, 0, 0)
        assert v.Phi[0, 0, 0] == pytest.approx(a.phi[0], abs=1e-6)
        assert v.delta[0] == pytest.approx(a.delta, abs=1e-6)

    def test_covariance_psd_and_json(self, rng):
        model = var_fit(rng.standard_normal((100, 3)), 2)
        assert np.linalg.eigvalsh(model.Sigma).min() >= -1e-12
        back = VarModel.from_json(model.to_json())
        np.testing.assert_array_equal(back.Phi, model.Phi)

    def test_guard(self):
        with pytest.raises(ValueError):
            var_fit(np.zeros((20, 3)), 1)


class TestKalman:
    def test_exact_measurement(self):
        model = KalmanModel(np.eye(2), np.eye(2), np.eye(2), 1e-12 * np.eye(2), np.zeros(2), np.eye(2))
        m, _ = kalman_update(model, [1.5, -0.5])
        np.testing.assert_allclose(m, [1.5, -0.5], atol=1e-9)

    def test_uninformative_observation(self):
        model = KalmanModel(1.0, 1.0, 0.0, 1e12, [0.3], 2.0)
        m, P = kalman_predict(model)
        m, P = kalman_update(KalmanModel(1.0, 1.0, 0.0, 1e12, m, P), [50.0])
        assert m[0] == pytest.approx(0.3, abs=1e-9) and P[0, 0] == pytest.approx(2.0, rel=1e-9)

    def test_grid_bayes_oracle(self):
        rng = np.random.default_rng(0)
        q, r = 0.1, 0.5
        x, obs = 0.0, []
        for _ in range(50):
            x += np.sqrt(q) * rng.standard_normal()
            obs.append(x + np.sqrt(r) * rng.standard_normal())
        means, covs = kalman_filter(KalmanModel(1.0, 1.0, q, r, [0.0], 1.0), obs)
        ref = grid_bayes_filter(obs, q, r, 0.0, 1.0, np.linspace(-10, 10, 2001))
        np.testing.assert_allclose(means[:, 0], ref[:, 0], atol=1e-3)
        np.testing.assert_allclose(covs[:, 0, 0], ref[:, 1], atol=1e-3)

    def test_covariance_stays_psd(self, rng):
        F = np.array([[1.0, 1.0], [0.0, 1.0]])
        model = KalmanModel(F, [[1.0, 0.0]], 0.01 * np.eye(2), 0.1, np.zeros(2), np.eye(2))
        _, covs = kalman_filter(model, rng.standard_normal((1000, 1)))
        for P in covs:
            assert np.abs(P - P.T).max() < 1e-10
            assert np.linalg.eigvalsh(P).min() >= -1e-10

    def test_errors(self):
        with pytest.raises(ShapeError):
            KalmanModel(np.eye(2), np.eye(3), np.eye(2), np.eye(3), np.zeros(2), np.eye(2))
        with pytest.raises(NumericError):
            kalman_update(KalmanModel(1.0, 1.0, 0.0, 0.0, [0.0], 0.0), [1.0])


class TestGridEstimation:
    @staticmethod
    def coin(th):
        return 7 * np.log(th) + 3 * np.log(1 - th)

    def test_ml(self):
        grid = np.round(np.arange(0, 1.0005, 0.001), 3)
        assert ml_map_estimate(self.coin, grid) == pytest.approx(0.7)

    def test_map_beta_prior(self):
        grid = np.round(np.arange(0, 1.0005, 0.001), 3)
        est = ml_map_estimate(self.coin, grid, lambda th: np.log(th) + np.log(1 - th))
        assert est == pytest.approx(8 / 12, abs=1e-3)

    def test_flat_prior_and_ties(self):
        grid = np.linspace(0.1, 0.9, 81)
        assert ml_map_estimate(self.coin, grid, np.zeros(81)) == ml_map_estimate(self.coin, grid)
        assert ml_map_estimate(lambda th: 0.0, [0.5, 0.2, 0.9]) == 0.2
        with pytest.raises(ValueError):
            ml_map_estimate(self.coin, [])
