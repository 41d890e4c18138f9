"""Stochastic polynomial chaos expansion of the conditional EDP distribution.

The log-EDP is expanded on Hermite polynomials of the transformed
inputs and of an artificial standard-normal latent variable, plus an
additive Gaussian noise.  Coefficients are fitted by maximum likelihood
with the latent dimension integrated out by Gauss-Hermite quadrature;
the noise level and the truncation are selected by k-fold
cross-validation on the out-of-sample likelihood.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from gmfrag.ground_motion import GroundMotionParams, ParamsJointModel
from gmfrag.transforms import (
    InputTransform,
    TruncationSet,
    basis_matrix_split,
    build_truncation,
    latent_factors,
)

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class SpceFitError(RuntimeError):
    """Raised when no candidate model could be optimized."""


def gauss_hermite_nodes(nq: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes and weights for a standard-normal weight function."""
    z, w = np.polynomial.hermite_e.hermegauss(nq)
    return z, w / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Dataset:
    """Training data: parameter rows (ia, t_mid, d595, omega_g) and EDPs."""

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        y = np.asarray(self.outputs, dtype=float)
        if x.shape[0] != y.shape[0] or x.shape[0] < 1:
            raise ValueError("inputs and outputs must have matching length >= 1")
        if np.any(y <= 0):
            raise ValueError("EDP values must be strictly positive")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "outputs", y)

    def __len__(self) -> int:
        return self.outputs.size

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.outputs[idx])

    @classmethod
    def from_params(cls, params: list[GroundMotionParams], outputs) -> "Dataset":
        return cls(np.array([p.as_array() for p in params]), outputs)


@dataclass(frozen=True)
class FitConfig:
    """Hyper-parameters of the maximum-likelihood fit."""

    nq: int = 32
    degree_grid: tuple = (1, 2, 3)
    q_grid: tuple = (0.75, 1.0)
    sigma_grid: tuple = tuple(np.geomspace(0.1, 1.2, 8))
    folds: int = 5
    restarts: int = 3
    seed: int = 0
    maxiter: int = 400

    def __post_init__(self):
        if self.nq < 2:
            raise ValueError("nq must be >= 2")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")


@dataclass(frozen=True)
class SpceModel:
    """Fitted stochastic expansion."""

    truncation: TruncationSet
    coeffs: np.ndarray
    sigma: float
    transform: InputTransform
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.size != len(self.truncation):
            raise ValueError("coefficient vector must match the truncation set")
        if not np.all(np.isfinite(c)) or self.sigma <= 0:
            raise ValueError("coefficients must be finite and sigma positive")
        object.__setattr__(self, "coeffs", c)

    # -- evaluation -------------------------------------------------------

    def _input_basis(self, x: np.ndarray) -> np.ndarray:
        h = self.transform.to_standard_array(np.atleast_2d(x))
        B, _ = basis_matrix_split(self.truncation, h)
        return B

    def mean_at_nodes(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """m(x_i, z_j) for rows of x and latent values z; shape (N, len(z))."""
        B = self._input_basis(x)
        Pz = latent_factors(self.truncation, z)
        return (B * self.coeffs) @ Pz

    def to_json(self, path) -> None:
        payload = {
            "kind": "spce",
            "transform": {
                "mu": self.transform.log_means.tolist(),
                "sigma": self.transform.log_stds.tolist(),
                "R": (self.transform.cholesky @ self.transform.cholesky.T).tolist(),
            },
            "truncation": [list(mi.degrees) for mi in self.truncation.indices],
            "trunc_meta": {
                "max_degree": self.truncation.max_degree,
                "q_norm": self.truncation.q_norm,
            },
            "coeffs": self.coeffs.tolist(),
            "sigma": self.sigma,
            "meta": self.meta,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)

    @classmethod
    def from_json(cls, path) -> "SpceModel":
        with open(path) as fh:
            payload = json.load(fh)
        from gmfrag.transforms import MultiIndex

        R = np.array(payload["transform"]["R"])
        transform = InputTransform(
            payload["transform"]["mu"],
            payload["transform"]["sigma"],
            np.linalg.cholesky(R),
        )
        indices = tuple(MultiIndex(tuple(d)) for d in payload["truncation"])
        trunc = TruncationSet(
            indices,
            payload["trunc_meta"]["max_degree"],
            payload["trunc_meta"]["q_norm"],
        )
        return cls(
            trunc,
            np.array(payload["coeffs"]),
            payload["sigma"],
            transform,
            payload.get("meta", {}),
        )


# -- likelihood -----------------------------------------------------------


def _loglik_terms(logy, M, sigma, log_w):
    """Per-point log-likelihood via log-sum-exp over quadrature nodes."""
    d = logy[:, None] - M
    expo = log_w[None, :] - LOG_SQRT_2PI - math.log(sigma) - d * d / (2.0 * sigma**2)
    mx = expo.max(axis=1)
    lse = mx + np.log(np.sum(np.exp(expo - mx[:, None]), axis=1))
    return lse - logy, d, expo, mx


def _loglik_and_grad(c, logy, B, Pz, sigma, log_w):
    M = (B * c) @ Pz
    ll, d, expo, mx = _loglik_terms(logy, M, sigma, log_w)
    R = np.exp(expo - mx[:, None])
    R /= R.sum(axis=1, keepdims=True)
    W = R * d / (sigma * sigma)
    grad = ((B.T @ W) * Pz).sum(axis=1)
    return float(np.sum(ll)), grad


def log_likelihood(
    c: np.ndarray,
    sigma: float,
    data: Dataset,
    trunc: TruncationSet,
    transform: InputTransform,
    nq: int = 32,
) -> float:
    """Total quadrature log-likelihood of the data under (c, sigma)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    h = transform.to_standard_array(data.inputs)
    B, _ = basis_matrix_split(trunc, h)
    z, w = gauss_hermite_nodes(nq)
    Pz = latent_factors(trunc, z)
    logy = np.log(data.outputs)
    M = (B * np.asarray(c, float)) @ Pz
    ll, *_ = _loglik_terms(logy, M, sigma, np.log(w))
    return float(np.sum(ll))


# -- fitting --------------------------------------------------------------


def _ols_init(B, Pz_deg, logy):
    """OLS of log y on the z-independent columns; returns (c0, resid_std)."""
    det_cols = np.flatnonzero(Pz_deg == 0)
    A = B[:, det_cols]
    sol, *_ = np.linalg.lstsq(A, logy, rcond=None)
    resid = logy - A @ sol
    dof = max(len(logy) - len(det_cols), 1)
    s = float(np.sqrt(np.sum(resid**2) / dof))
    c0 = np.zeros(B.shape[1])
    c0[det_cols] = sol
    return c0, s


def _optimize_c(c_init, logy, B, Pz, sigma, log_w, maxiter):
    def neg(c):
        ll, grad = _loglik_and_grad(c, logy, B, Pz, sigma, log_w)
        return -ll, -grad

    res = optimize.minimize(
        neg,
        c_init,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": maxiter, "ftol": 1e-11, "gtol": 1e-8},
    )
    return res.x, -res.fun


def _fit_candidate(
    logy, B, Pz, Pz_deg, sigma, log_w, rng, restarts, maxiter, c_warm=None
):
    """Maximize the likelihood in c at fixed sigma; multi-start on the jitter."""
    best = None
    c0, s0 = _ols_init(B, Pz_deg, logy)
    z_cols = np.flatnonzero(Pz_deg > 0)
    starts = []
    if c_warm is not None:
        starts.append(np.array(c_warm))
    for _ in range(max(restarts - len(starts), 1)):
        c = c0.copy()
        c[z_cols] = 0.05 * s0 * rng.standard_normal(z_cols.size)
        starts.append(c)
    for c_start in starts:
        try:
            c_hat, ll = _optimize_c(c_start, logy, B, Pz, sigma, log_w, maxiter)
        except (np.linalg.LinAlgError, ValueError):
            continue
        if best is None or ll > best[1]:
            best = (c_hat, ll)
    if best is None:
        raise SpceFitError("optimizer failed on all restarts")
    return best


def _fix_latent_sign(trunc: TruncationSet, c: np.ndarray) -> np.ndarray:
    """Break the z -> -z symmetry: largest z-linear coefficient made positive."""
    deg = trunc.degree_matrix()
    zdeg = deg[:, -1]
    lin = np.flatnonzero(zdeg == 1)
    if lin.size == 0:
        return c
    pivot = lin[np.argmax(np.abs(c[lin]))]
    if c[pivot] < 0:
        c = c.copy()
        c[zdeg % 2 == 1] *= -1.0
    return c


def _kfold_indices(n, folds, rng):
    perm = rng.permutation(n)
    return np.array_split(perm, folds)


def fit_spce(
    data: Dataset,
    cfg: FitConfig = FitConfig(),
    transform: InputTransform | None = None,
    joint: ParamsJointModel | None = None,
) -> SpceModel:
    """Fit the stochastic expansion with CV selection of (truncation, sigma).

    The input transform defaults to the catalog joint model; pass either
    a transform or the joint model the data were sampled from.
    """
    if transform is None:
        joint = joint or ParamsJointModel.catalog_default()
        transform = InputTransform.from_joint(joint)
    logy = np.log(data.outputs)
    h = transform.to_standard_array(data.inputs)
    dims = h.shape[1] + 1
    z_nodes, w = gauss_hermite_nodes(cfg.nq)
    log_w = np.log(w)
    rng = np.random.default_rng(cfg.seed)

    # unique truncation candidates over the (p, q) grid
    candidates = []
    seen = set()
    for p in cfg.degree_grid:
        for q in cfg.q_grid:
            trunc = build_truncation(dims, p, q)
            key = tuple(mi.degrees for mi in trunc.indices)
            if key not in seen:
                seen.add(key)
                candidates.append(trunc)

    folds = _kfold_indices(len(data), cfg.folds, rng)
    n = len(data)
    best = None  # (cv_score, trunc, sigma)
    for trunc in candidates:
        if n - max(len(f) for f in folds) < len(trunc):
            continue
        B, _ = basis_matrix_split(trunc, h)
        Pz = latent_factors(trunc, z_nodes)
        Pz_deg = trunc.degree_matrix()[:, -1]
        _, resid_std = _ols_init(B, Pz_deg, logy)
        # floor keeps the grid well-posed on (near-)deterministic data
        sigmas = [f * max(resid_std, 1e-6) for f in cfg.sigma_grid]
        cv_scores = np.zeros(len(sigmas))
        for fold in folds:
            mask = np.ones(n, dtype=bool)
            mask[fold] = False
            c_warm = None
            for si, sigma in enumerate(sigmas):
                restarts = cfg.restarts if c_warm is None else 1
                c_hat, _ = _fit_candidate(
                    logy[mask],
                    B[mask],
                    Pz,
                    Pz_deg,
                    sigma,
                    log_w,
                    rng,
                    restarts,
                    cfg.maxiter,
                    c_warm=c_warm,
                )
                c_warm = c_hat
                M = (B[fold] * c_hat) @ Pz
                ll, *_ = _loglik_terms(logy[fold], M, sigma, log_w)
                cv_scores[si] += float(np.sum(ll))
        si_best = int(np.argmax(cv_scores))
        if best is None or cv_scores[si_best] > best[0]:
            best = (cv_scores[si_best], trunc, sigmas[si_best])
    if best is None:
        raise SpceFitError("no truncation candidate is identifiable with this N")

    cv_score, trunc, sigma = best
    B, _ = basis_matrix_split(trunc, h)
    Pz = latent_factors(trunc, z_nodes)
    Pz_deg = trunc.degree_matrix()[:, -1]
    c_hat, ll = _fit_candidate(
        logy, B, Pz, Pz_deg, sigma, log_w, rng, cfg.restarts, cfg.maxiter
    )
    c_hat = _fix_latent_sign(trunc, c_hat)
    meta = {
        "N": n,
        "cv_score": cv_score,
        "seed": cfg.seed,
        "loglik": ll,
        "nq": cfg.nq,
        "p": trunc.max_degree,
        "q": trunc.q_norm,
    }
    return SpceModel(trunc, c_hat, sigma, transform, meta)


# -- prediction -----------------------------------------------------------


def conditional_cdf(model: SpceModel, x, y) -> np.ndarray | float:
    """Semi-analytic conditional CDF F(y | x) via the quadrature nodes."""
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(y_arr <= 0):
        raise ValueError("y must be positive")
    x_arr = _x_array(x)
    z, w = gauss_hermite_nodes(model.meta.get("nq", 32))
    M = model.mean_at_nodes(x_arr, z)[0]
    F = np.sum(
        w[None, :] * stats.norm.cdf((np.log(y_arr)[:, None] - M) / model.sigma),
        axis=1,
    )
    return F if np.ndim(y) else float(F[0])


def fragility(model: SpceModel, x, delta0: float) -> float:
    """Exceedance probability 1 - F(delta0 | x)."""
    if delta0 <= 0:
        raise ValueError("delta0 must be positive")
    return 1.0 - conditional_cdf(model, x, delta0)


def sample_conditional(
    model: SpceModel, x, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw EDP samples at fixed x by sampling (Z, eps)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x_arr = _x_array(x)
    z = rng.standard_normal(n)
    eps = model.sigma * rng.standard_normal(n)
    m = model.mean_at_nodes(x_arr, z)[0]
    return np.exp(m + eps)


def sample_unconditional(
    model: SpceModel, joint: ParamsJointModel, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw EDP samples with X from the joint model (one draw per X)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    u = rng.standard_normal((n, 4))
    logs = joint.log_means + joint.log_stds * (u @ joint.cholesky.T)
    x = np.exp(logs)
    z = rng.standard_normal(n)
    eps = model.sigma * rng.standard_normal(n)
    B = model._input_basis(x)
    Pz = latent_factors(model.truncation, z)  # (P, n)
    m = np.einsum("ip,pi->i", B * model.coeffs, Pz)
    return np.exp(m + eps)


def nuisance_conditional(
    joint: ParamsJointModel, ia: float, omega_g: float
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian-copula conditional of (t_mid, d595) given (ia, omega_g).

    Returns the conditional mean and covariance of the standardized
    log-coordinates of (t_mid, d595).
    """
    R = joint.correlation
    obs, hid = [0, 3], [1, 2]
    g_obs = np.array(
        [
            (math.log(ia) - joint.log_means[0]) / joint.log_stds[0],
            (math.log(omega_g) - joint.log_means[3]) / joint.log_stds[3],
        ]
    )
    Roo = R[np.ix_(obs, obs)]
    Rho = R[np.ix_(hid, obs)]
    Rhh = R[np.ix_(hid, hid)]
    A = Rho @ np.linalg.inv(Roo)
    mean = A @ g_obs
    cov = Rhh - A @ Rho.T
    return mean, cov


def averaged_fragility_surface(
    model: SpceModel,
    joint: ParamsJointModel,
    ia_grid,
    omega_grid,
    delta0: float,
    n_nuisance: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Fragility over an (ia, omega_g) grid, averaged over the nuisance dims.

    For each grid point the fragility is averaged over draws of
    (t_mid, d595) from their copula-conditional distribution.
    """
    ia_grid = np.atleast_1d(np.asarray(ia_grid, float))
    omega_grid = np.atleast_1d(np.asarray(omega_grid, float))
    if ia_grid.size == 0 or omega_grid.size == 0:
        raise ValueError("grid must be nonempty")
    z, w = gauss_hermite_nodes(model.meta.get("nq", 32))
    log_d0 = math.log(delta0)
    out = np.empty((ia_grid.size, omega_grid.size))
    for i, ia in enumerate(ia_grid):
        for j, wg in enumerate(omega_grid):
            mean, cov = nuisance_conditional(joint, ia, wg)
            L = np.linalg.cholesky(cov)
            g = mean + rng.standard_normal((n_nuisance, 2)) @ L.T
            t_mid = np.exp(joint.log_means[1] + joint.log_stds[1] * g[:, 0])
            d595 = np.exp(joint.log_means[2] + joint.log_stds[2] * g[:, 1])
            x = np.column_stack(
                [np.full(n_nuisance, ia), t_mid, d595, np.full(n_nuisance, wg)]
            )
            M = model.mean_at_nodes(x, z)
            F = np.sum(
                w[None, :] * stats.norm.cdf((log_d0 - M) / model.sigma), axis=1
            )
            out[i, j] = float(np.mean(1.0 - F))
    return out


def _x_array(x) -> np.ndarray:
    if isinstance(x, GroundMotionParams):
        return x.as_array()[None, :]
    return np.atleast_2d(np.asarray(x, dtype=float))
