"""Classical forecasting baselines: least squares, discounted smoothing,
ARIMA (Hannan-Rissanen), VAR, the Kalman filter and grid ML/MAP estimation.

ARIMA moving-average weights follow the subtractive convention
``y_t = delta + eps_t + sum phi_k y_{t-k} - sum theta_k eps_{t-k}``.
"""
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import NumericError, ShapeError
from .linalg import pinv_symmetric, symmetric_eig

SINGULAR_RTOL = 1e-10


def _normal_solve(X, y, strict=False):
    """Least squares through the normal equations.

    A singular Gram matrix falls back to the pseudo-inverse, or raises
    :class:`NumericError` when ``strict``.
    """
    G = X.T @ X
    if strict:
        w, _ = symmetric_eig(G)
        if w[0] <= SINGULAR_RTOL * max(w[-1], 1e-300):
            raise NumericError("regression design is (nearly) singular")
    return pinv_symmetric(G) @ (X.T @ y)


def linfit(X, y):
    """Weights minimizing ||y - X w||^2; ``X`` carries its own intercept column."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.size == 0 or y.size == 0:
        raise ValueError("empty data")
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ShapeError(f"design {X.shape} does not match targets {y.shape}")
    if X.shape[0] < X.shape[1]:
        raise ValueError(f"need at least {X.shape[1]} observations, got {X.shape[0]}")
    return _normal_solve(X, y)


def discount_weights(T, theta):
    """theta^(T-t) for t = 1..T (oldest first)."""
    return theta ** np.arange(T - 1, -1, -1, dtype=np.float64)


def exp_smooth_estimate(y, theta):
    """(1 - theta) sum_t theta^(T-t) y_t."""
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ValueError("empty series")
    return (1.0 - theta) * float(discount_weights(len(y), theta) @ y)


def discounted_polyfit(y, theta, order):
    """Weighted least squares on the basis t^k / k!, t = 1..T, weights theta^(T-t)."""
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    y = np.asarray(y, dtype=np.float64)
    T = len(y)
    if T < order + 1:
        raise ValueError(f"need at least {order + 1} observations")
    t = np.arange(1, T + 1, dtype=np.float64)
    B = np.stack([t ** k / math.factorial(k) for k in range(order + 1)], axis=1)
    sw = np.sqrt(discount_weights(T, theta))
    Bw = B * sw[:, None]
    G = Bw.T @ Bw
    w, _ = symmetric_eig(G)
    if w[0] <= 1e-14 * w[-1]:
        raise NumericError("polynomial basis is rank deficient")
    return np.linalg.solve(G, Bw.T @ (y * sw))


# ---------------------------------------------------------------- ARIMA

@dataclass
class ArimaModel:
    p: int
    d: int
    q: int
    delta: float
    phi: np.ndarray       # p + d weights on undifferenced lags
    theta: np.ndarray     # q weights, subtractive convention
    sigma2: float
    arma_ar: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_json(self):
        d = asdict(self)
        for k in ("phi", "theta", "arma_ar"):
            d[k] = np.asarray(d[k]).tolist()
        return json.dumps({"kind": "arima", **d}, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        d.pop("kind", None)
        for k in ("phi", "theta", "arma_ar"):
            d[k] = np.asarray(d[k], dtype=np.float64)
        return cls(**d)


def _lags(w, lags, start):
    """Matrix whose row for time t (t >= start) holds w[t-1], ..., w[t-lags]."""
    return np.stack([w[start - k:len(w) - k] for k in range(1, lags + 1)], axis=1) \
        if lags else np.zeros((len(w) - start, 0))


def _expand_ar(a, d):
    """Coefficients phi of 1 - sum phi_k B^k = (1 - sum a_i B^i)(1 - B)^d."""
    poly = np.concatenate([[1.0], -np.asarray(a, dtype=np.float64)])
    for _ in range(d):
        poly = np.convolve(poly, [1.0, -1.0])
    return -poly[1:]


def arima_fit(y, p, d, q):
    y = np.asarray(y, dtype=np.float64)
    if min(p, d, q) < 0:
        raise ValueError("orders must be nonnegative")
    need = 10 * (p + d + q + 1)
    if len(y) < need:
        raise ValueError(f"ARIMA({p},{d},{q}) needs at least {need} observations, got {len(y)}")
    w = np.diff(y, n=d) if d else y.copy()
    if q == 0:
        start = p
        X = np.hstack([np.ones((len(w) - start, 1)), _lags(w, p, start)])
        beta = _normal_solve(X, w[start:], strict=True)
        resid = w[start:] - X @ beta
        ma = np.zeros(0)
    else:
        # long autoregression supplies innovation proxies for the MA lags
        m = max(p + q, min(int(np.ceil(np.log(len(w)) ** 1.5)), len(w) // 4))
        Xl = np.hstack([np.ones((len(w) - m, 1)), _lags(w, m, m)])
        eps = np.zeros_like(w)
        eps[m:] = w[m:] - Xl @ _normal_solve(Xl, w[m:], strict=True)
        start = m + q
        X = np.hstack([np.ones((len(w) - start, 1)), _lags(w, p, start), _lags(eps, q, start)])
        beta = _normal_solve(X, w[start:], strict=True)
        resid = w[start:] - X @ beta
        ma = -beta[1 + p:]
    a = beta[1:1 + p]
    return ArimaModel(p, d, q, float(beta[0]), _expand_ar(a, d), ma,
                      float(np.mean(resid ** 2)), np.asarray(a))


def arima_residuals(model, history):
    """In-sample innovations with pre-sample innovations set to zero."""
    y = np.asarray(history, dtype=np.float64)
    k = len(model.phi)
    eps = np.zeros_like(y)
    for t in range(k, len(y)):
        ar = sum(model.phi[i] * y[t - 1 - i] for i in range(k))
        ma = sum(model.theta[j] * eps[t - 1 - j] for j in range(model.q) if t - 1 - j >= 0)
        eps[t] = y[t] - model.delta - ar + ma
    return eps


def arima_forecast(model, history, tau):
    """Forecast path y_{t+1..t+tau}; future innovations are zero."""
    if tau < 1:
        raise ValueError("tau must be at least 1")
    y = list(np.asarray(history, dtype=np.float64))
    k = len(model.phi)
    if len(y) < k:
        raise ValueError(f"need at least {k} past values")
    eps = list(arima_residuals(model, y))
    out = []
    for _ in range(tau):
        ar = sum(model.phi[i] * y[-1 - i] for i in range(k))
        ma = sum(model.theta[j] * eps[-1 - j] for j in range(model.q) if j < len(eps))
        nxt = model.delta + ar - ma
        y.append(nxt)
        eps.append(0.0)
        out.append(nxt)
    return np.array(out)


# ---------------------------------------------------------------- VAR

@dataclass
class VarModel:
    p: int
    delta: np.ndarray          # (m,)
    Phi: np.ndarray            # (p, m, m)
    Sigma: np.ndarray          # (m, m)

    def to_json(self):
        return json.dumps({"kind": "var", "p": self.p, "delta": self.delta.tolist(),
                           "Phi": self.Phi.tolist(), "Sigma": self.Sigma.tolist()}, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(d["p"], np.asarray(d["delta"]), np.asarray(d["Phi"]), np.asarray(d["Sigma"]))


def var_fit(Y, p):
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    T, m = Y.shape
    if p < 1:
        raise ValueError("VAR order must be at least 1")
    need = 10 * (m * p + 1)
    if T < need:
        raise ValueError(f"VAR({p}) on {m} series needs at least {need} observations, got {T}")
    X = np.hstack([np.ones((T - p, 1))] + [Y[p - k:T - k] for k in range(1, p + 1)])
    B = _normal_solve(X, Y[p:], strict=True)          # (1 + m p, m)
    resid = Y[p:] - X @ B
    Sigma = resid.T @ resid / len(resid)
    Phi = np.stack([B[1 + k * m:1 + (k + 1) * m].T for k in range(p)])
    return VarModel(p, B[0].copy(), Phi, 0.5 * (Sigma + Sigma.T))


def var_forecast(model, history, tau):
    """Forecast path of shape (tau, m) with zero future noise."""
    if tau < 1:
        raise ValueError("tau must be at least 1")
    H = np.asarray(history, dtype=np.float64)
    if H.ndim == 1:
        H = H[:, None]
    if len(H) < model.p:
        raise ValueError(f"need at least {model.p} past observations")
    buf = list(H[-model.p:])
    out = []
    for _ in range(tau):
        nxt = model.delta + sum(model.Phi[k] @ buf[-1 - k] for k in range(model.p))
        buf.append(nxt)
        out.append(nxt)
    return np.array(out)


# ---------------------------------------------------------------- Kalman filter

@dataclass
class KalmanModel:
    F: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    m: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        for k in ("F", "H", "Q", "R", "P"):
            setattr(self, k, np.atleast_2d(np.asarray(getattr(self, k), dtype=np.float64)))
        self.m = np.atleast_1d(np.asarray(self.m, dtype=np.float64))
        l, d = self.F.shape[0], self.H.shape[0]
        if self.F.shape != (l, l) or self.H.shape != (d, l) or self.Q.shape != (l, l) \
                or self.R.shape != (d, d) or self.P.shape != (l, l) or self.m.shape != (l,):
            raise ShapeError("inconsistent state-space dimensions")

    def to_json(self):
        return json.dumps({"kind": "kalman", **{k: np.asarray(v).tolist() for k, v in asdict(self).items()}},
                          sort_keys=True)


def kalman_predict(model):
    """(F m, F P F^T + Q)."""
    m = model.F @ model.m
    P = model.F @ model.P @ model.F.T + model.Q
    return m, 0.5 * (P + P.T)


def kalman_update(model, x_obs):
    """Condition the current (predicted) state of ``model`` on ``x_obs``.

    Covariance uses the Joseph form (I - K H) P (I - K H)^T + K R K^T.
    """
    x = np.atleast_1d(np.asarray(x_obs, dtype=np.float64))
    Hm, P = model.H, model.P
    S = Hm @ P @ Hm.T + model.R
    S = 0.5 * (S + S.T)
    w, _ = symmetric_eig(S)
    if w[0] <= 1e-14 * max(abs(w[-1]), 1e-300):
        raise NumericError("innovation covariance is singular")
    K = np.linalg.solve(S, Hm @ P).T
    m = model.m + K @ (x - Hm @ model.m)
    IKH = np.eye(len(model.m)) - K @ Hm
    P_new = IKH @ P @ IKH.T + K @ model.R @ K.T
    return m, 0.5 * (P_new + P_new.T)


def kalman_filter(model, observations):
    """Predict/update over a sequence; returns filtered means and covariances."""
    means, covs = [], []
    for x in observations:
        m, P = kalman_predict(model)
        model = replace(model, m=m, P=P)
        m, P = kalman_update(model, x)
        model = replace(model, m=m, P=P)
        means.append(m)
        covs.append(P)
    return np.array(means), np.array(covs)


# ---------------------------------------------------------------- grid estimation

def ml_map_estimate(log_likelihood, grid, log_prior=None):
    """Grid argmax of the log-likelihood (plus log-prior for MAP).

    ``log_prior`` may be an array over the grid or a callable. Ties resolve
    to the smallest parameter value.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("empty grid")
    order = np.argsort(grid, kind="stable")
    g = grid[order]
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.array([log_likelihood(th) for th in g], dtype=np.float64)
        if log_prior is not None:
            lp = np.array([log_prior(th) for th in g]) if callable(log_prior) \
                else np.asarray(log_prior, dtype=np.float64)[order]
            score = score + lp
    score = np.where(np.isnan(score), -np.inf, score)
    return float(g[int(np.argmax(score))])
