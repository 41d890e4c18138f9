"""Error measures for conditional-distribution and fragility estimates.

The headline metric is the order-2 Wasserstein distance between the
empirical conditional distributions of the log-EDP, averaged over a
validation set and normalized by the pooled log-EDP variance.
Fragility estimates are scored by a variance-normalized MSE.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Empirical distribution represented by its sorted sample."""

    sorted_values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.sorted_values, dtype=float))
        if v.size == 0 or not np.all(np.isfinite(v)):
            raise ValueError("sample must be nonempty and finite")
        object.__setattr__(self, "sorted_values", v)

    def __len__(self) -> int:
        return self.sorted_values.size


@dataclass(frozen=True)
class ValidationBundle:
    """Validation points with replication-based reference distributions.

    `references` hold the log-EDP replications per point; `pool_variance`
    is Var[log Y] over the training pool (population convention).
    """

    points: np.ndarray
    references: tuple
    pool_variance: float

    def __post_init__(self):
        if self.pool_variance <= 0:
            raise ValueError("pool variance must be positive")
        if len(self.references) != np.atleast_2d(self.points).shape[0]:
            raise ValueError("one reference distribution per validation point")
        if any(len(r) == 0 for r in self.references):
            raise ValueError("reference distributions must be nonempty")


def wasserstein2_sq(a: EmpiricalDistribution, b: EmpiricalDistribution) -> float:
    """Squared order-2 Wasserstein distance between empirical distributions.

    Exact quantile-space integral for step quantile functions, evaluated
    piecewise on the merged probability grid.
    """
    xa, xb = a.sorted_values, b.sorted_values
    n, m = xa.size, xb.size
    if n == m:
        d = xa - xb
        return float(np.mean(d * d))
    edges = np.union1d(np.arange(1, n + 1) / n, np.arange(1, m + 1) / m)
    widths = np.diff(np.concatenate([[0.0], edges]))
    mid = edges - widths / 2.0
    qa = xa[np.minimum((mid * n).astype(int), n - 1)]
    qb = xb[np.minimum((mid * m).astype(int), m - 1)]
    d = qa - qb
    return float(np.sum(widths * d * d))


def normalized_ws_error(
    sampler,
    bundle: ValidationBundle,
    n_surrogate: int = 10_000,
    rng: np.random.Generator | None = None,
) -> float:
    """Average normalized squared Wasserstein distance over the bundle.

    `sampler(x, n, rng)` must return EDP draws (not logs) of the
    surrogate conditional distribution at the parameter row `x`.
    """
    if n_surrogate < 1_000:
        raise ValueError("n_surrogate must be >= 1000")
    if rng is None:
        rng = np.random.default_rng()
    pts = np.atleast_2d(bundle.points)
    total = 0.0
    for x, ref in zip(pts, bundle.references):
        draws = np.log(sampler(x, n_surrogate, rng))
        total += wasserstein2_sq(ref, EmpiricalDistribution(draws))
    return total / (len(bundle.references) * bundle.pool_variance)


def fragility_rel_mse(p_ref, p_model) -> float:
    """Mean squared fragility error normalized by the reference variance."""
    p_ref = np.asarray(p_ref, dtype=float)
    p_model = np.asarray(p_model, dtype=float)
    if p_ref.shape != p_model.shape:
        raise ValueError("vectors must have the same length")
    var = float(np.var(p_ref))  # population convention
    if var == 0:
        raise ValueError("degenerate reference fragility (zero variance)")
    return float(np.mean((p_ref - p_model) ** 2)) / var


def empirical_ccdf(samples, grid) -> np.ndarray:
    """P(Y >= delta) on a threshold grid, right-continuous counting."""
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size == 0:
        raise ValueError("samples must be nonempty")
    grid = np.asarray(grid, dtype=float)
    below = np.searchsorted(s, grid, side="left")
    return (s.size - below) / s.size
