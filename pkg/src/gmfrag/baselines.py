"""Classical fragility estimators used as references.

Cloud-analysis log-linear model, probit soft classifier, and a kernel
conditional CDF estimator with cross-validated bandwidths, all applied
to the logarithms of the intensity measures (and of the EDP where it is
modeled).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from gmfrag.spce import Dataset


class BaselineFitError(RuntimeError):
    """Raised when a baseline estimator cannot be fitted."""


# -- linear model (cloud analysis) ----------------------------------------


@dataclass(frozen=True)
class LinearModel:
    """Log-linear regression of the EDP with homoscedastic Gaussian noise."""

    beta0: float
    betas: np.ndarray
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "betas", np.asarray(self.betas, dtype=float))
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def mean_log(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.beta0 + np.log(x) @ self.betas

    def to_json(self, path) -> None:
        payload = {
            "kind": "lm",
            "beta0": self.beta0,
            "betas": self.betas.tolist(),
            "sigma": self.sigma,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)


def lm_fit(data: Dataset) -> LinearModel:
    """Ordinary least squares of log y on the log IMs."""
    n, m = data.inputs.shape
    if n <= m + 1:
        raise BaselineFitError("too few points for the linear model")
    A = np.column_stack([np.ones(n), np.log(data.inputs)])
    sol, _, rank, _ = np.linalg.lstsq(A, np.log(data.outputs), rcond=None)
    if rank < m + 1:
        raise BaselineFitError("design matrix is rank deficient")
    resid = np.log(data.outputs) - A @ sol
    sigma = math.sqrt(float(np.sum(resid**2)) / (n - (m + 1)))
    return LinearModel(float(sol[0]), sol[1:], sigma)


def lm_fragility(m: LinearModel, x, delta0: float):
    """p_f = 1 - Phi((ln delta0 - mean_log(x)) / sigma)."""
    if delta0 <= 0:
        raise ValueError("delta0 must be positive")
    mean = m.mean_log(x)
    if m.sigma == 0:
        out = np.where(math.log(delta0) <= mean, 1.0, 0.0)
    else:
        out = 1.0 - stats.norm.cdf((math.log(delta0) - mean) / m.sigma)
    return out if out.size > 1 else float(out[0])


def lm_sample(
    m: LinearModel, x, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw EDP samples at fixed x from the fitted lognormal."""
    mean = m.mean_log(x)[0]
    return np.exp(mean + m.sigma * rng.standard_normal(n))


# -- probit classifier ----------------------------------------------------


@dataclass(frozen=True)
class ProbitModel:
    """Soft classifier Phi(beta0 + sum beta_j ln x_j) for one threshold."""

    beta0: float
    betas: np.ndarray
    delta0: float

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=float)
        if not (np.isfinite(self.beta0) and np.all(np.isfinite(b))):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "betas", b)

    def to_json(self, path) -> None:
        payload = {
            "kind": "probit",
            "beta0": self.beta0,
            "betas": self.betas.tolist(),
            "delta0": self.delta0,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)


def probit_fit(data: Dataset, delta0: float, max_iter: int = 200) -> ProbitModel:
    """Maximum-likelihood probit fit of the exceedance labels y >= delta0.

    Newton iterations on the standardized log design until the gradient
    norm drops below 1e-8; diverging coefficients are flagged as
    complete separation.
    """
    t = (data.outputs >= delta0).astype(float)
    if t.min() == t.max():
        raise BaselineFitError("both exceedance classes must be present")
    logs = np.log(data.inputs)
    mu = logs.mean(axis=0)
    sd = logs.std(axis=0)
    sd[sd == 0] = 1.0
    A = np.column_stack([np.ones(len(t)), (logs - mu) / sd])
    beta = np.zeros(A.shape[1])
    beta[0] = stats.norm.ppf(np.clip(t.mean(), 1e-6, 1 - 1e-6))
    for _ in range(max_iter):
        eta = A @ beta
        p = np.clip(stats.norm.cdf(eta), 1e-12, 1 - 1e-12)
        phi = stats.norm.pdf(eta)
        score = A.T @ (phi * (t - p) / (p * (1 - p)))
        w = phi * phi / (p * (1 - p))
        H = A.T @ (A * w[:, None])
        try:
            step = np.linalg.solve(H, score)
        except np.linalg.LinAlgError as exc:
            raise BaselineFitError("singular probit Hessian") from exc
        beta = beta + step
        if np.linalg.norm(beta) > 1e3:
            raise BaselineFitError(
                "complete separation detected (coefficients diverging)"
            )
        if np.linalg.norm(score) < 1e-8:
            break
    else:
        raise BaselineFitError("probit fit did not converge")
    # the MLE does not exist when a direction separates the classes; the
    # fitted score separating the data is the telltale (the coefficient
    # norm diverges only in exact arithmetic)
    eta = A @ beta
    if t.any() and (~t.astype(bool)).any():
        if eta[t == 0].max() < eta[t == 1].min():
            raise BaselineFitError("complete separation detected")
    # undo the standardization
    betas = beta[1:] / sd
    beta0 = float(beta[0] - np.sum(beta[1:] * mu / sd))
    return ProbitModel(beta0, betas, delta0)


def probit_fragility(m: ProbitModel, x):
    """Exceedance probability Phi(beta0 + sum beta_j ln x_j)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = stats.norm.cdf(m.beta0 + np.log(x) @ m.betas)
    return out if out.size > 1 else float(out[0])


# -- kernel conditional CDF estimator -------------------------------------


@dataclass(frozen=True)
class KcdeModel:
    """Gaussian product-kernel conditional CDF estimator in log space."""

    train_x_log: np.ndarray
    train_y_log: np.ndarray
    bw_x: np.ndarray
    bw_y: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.asarray(self.bw_x) <= 0) or self.bw_y <= 0:
            raise ValueError("bandwidths must be positive")

    def weights(self, x_log: np.ndarray) -> np.ndarray:
        """Normalized kernel weights of the training points at queries."""
        x_log = np.atleast_2d(x_log)
        d = (x_log[:, None, :] - self.train_x_log[None, :, :]) / self.bw_x
        logk = -0.5 * np.sum(d * d, axis=2)
        logk -= logk.max(axis=1, keepdims=True)
        k = np.exp(logk)
        return k / k.sum(axis=1, keepdims=True)

    def cdf_log(self, x_log: np.ndarray, ylog_grid: np.ndarray) -> np.ndarray:
        """F(y | x) on a log-y grid; shape (n_queries, n_grid)."""
        w = self.weights(x_log)
        G = stats.norm.cdf(
            (np.atleast_1d(ylog_grid)[None, :] - self.train_y_log[:, None])
            / self.bw_y
        )
        return w @ G


def _rule_of_thumb(x_log, y_log):
    n, d = x_log.shape
    scale = n ** (-1.0 / (4 + d))
    return x_log.std(axis=0) * scale, float(y_log.std() * scale)


def _cv_objective(x_log, y_log, bw_x, bw_y, folds, ygrid):
    n = x_log.shape[0]
    total = 0.0
    for f in range(len(folds)):
        test = folds[f]
        mask = np.ones(n, dtype=bool)
        mask[test] = False
        sub = KcdeModel(x_log[mask], y_log[mask], bw_x, bw_y)
        F = sub.cdf_log(x_log[test], ygrid)
        ind = (y_log[test][:, None] <= ygrid[None, :]).astype(float)
        total += float(np.sum((ind - F) ** 2))
    return total


def kcde_fit(data: Dataset, cv_folds: int = 5, seed: int = 0) -> KcdeModel:
    """Fit bandwidths by k-fold CV of the integrated squared CDF error.

    A common multiplier of the rule-of-thumb bandwidths is searched on a
    log grid; a degenerate search falls back to the rule of thumb.
    """
    if len(data) < 50:
        raise BaselineFitError("KCDE requires at least 50 points")
    x_log = np.log(data.inputs)
    y_log = np.log(data.outputs)
    bw_x0, bw_y0 = _rule_of_thumb(x_log, y_log)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(data))
    folds = np.array_split(perm, cv_folds)
    ygrid = np.quantile(y_log, np.linspace(0.02, 0.98, 25))
    scales = np.geomspace(0.25, 4.0, 13)
    scores = np.array(
        [
            _cv_objective(x_log, y_log, s * bw_x0, s * bw_y0, folds, ygrid)
            for s in scales
        ]
    )
    best = int(np.argmin(scores))
    meta = {"cv_scale": float(scales[best]), "cv_score": float(scores[best])}
    if not np.all(np.isfinite(scores)) or best in (0, len(scales) - 1):
        warnings.warn(
            "degenerate KCDE bandwidth search, falling back to rule of thumb"
        )
        return KcdeModel(x_log, y_log, bw_x0, bw_y0, {"cv_scale": 1.0})
    s = scales[best]
    return KcdeModel(x_log, y_log, s * bw_x0, s * bw_y0, meta)


def kcde_conditional_cdf(m: KcdeModel, x, y):
    """Conditional CDF F(y | x) for positive query values."""
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(y_arr <= 0):
        raise ValueError("y must be positive")
    x_log = np.log(np.atleast_2d(np.asarray(x, dtype=float)))
    F = m.cdf_log(x_log, np.log(y_arr))[0]
    return F if np.ndim(y) else float(F[0])


def kcde_fragility(m: KcdeModel, x, delta0: float) -> float:
    return 1.0 - kcde_conditional_cdf(m, x, delta0)


def kcde_sample(
    m: KcdeModel, x, n: int, rng: np.random.Generator, grid_size: int = 512
) -> np.ndarray:
    """Draw EDP samples at fixed x by inverse-CDF interpolation on a grid."""
    x_log = np.log(np.atleast_2d(np.asarray(x, dtype=float)))
    lo = m.train_y_log.min() - 4.0 * m.bw_y
    hi = m.train_y_log.max() + 4.0 * m.bw_y
    grid = np.linspace(lo, hi, grid_size)
    F = m.cdf_log(x_log, grid)[0]
    F = np.maximum.accumulate(F)
    u = rng.uniform(size=n)
    y_log = np.interp(u, F, grid, left=grid[0], right=grid[-1])
    return np.exp(y_log)
