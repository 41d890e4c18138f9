"""Isoprobabilistic input transform and orthonormal polynomial basis.

Because the ground motion parameters are jointly lognormal with a
Gaussian copula, the map to independent standard normals is exact and
linear in log-space.  All transformed coordinates (and the latent
variable of the stochastic expansion) are standard normal, so the basis
is built from normalized probabilists' Hermite polynomials.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import linalg

from gmfrag.ground_motion import (
    DEFAULT_ZETA_G,
    GroundMotionParams,
    ParamsJointModel,
)


@dataclass(frozen=True)
class InputTransform:
    """Linear log-space map between parameters and standard normals."""

    log_means: np.ndarray
    log_stds: np.ndarray
    cholesky: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "log_means", np.asarray(self.log_means, float))
        object.__setattr__(self, "log_stds", np.asarray(self.log_stds, float))
        object.__setattr__(self, "cholesky", np.asarray(self.cholesky, float))

    @classmethod
    def from_joint(cls, joint: ParamsJointModel) -> "InputTransform":
        return cls(joint.log_means, joint.log_stds, joint.cholesky)

    def to_standard_array(self, x: np.ndarray) -> np.ndarray:
        """Map rows of positive parameters to standard-normal coordinates."""
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0):
            raise ValueError("parameters must be strictly positive")
        g = (np.log(x) - self.log_means) / self.log_stds
        return linalg.solve_triangular(self.cholesky, g.T, lower=True).T

    def from_standard_array(self, h: np.ndarray) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        logs = self.log_means + self.log_stds * (h @ self.cholesky.T)
        return np.exp(logs)


def to_standard(transform: InputTransform, x: GroundMotionParams) -> np.ndarray:
    """Transform one parameter set to 4 standard-normal coordinates."""
    return transform.to_standard_array(x.as_array()[None, :])[0]


def from_standard(transform: InputTransform, h: np.ndarray) -> GroundMotionParams:
    """Inverse transform of `to_standard`."""
    v = transform.from_standard_array(np.asarray(h, float)[None, :])[0]
    return GroundMotionParams(v[0], v[1], v[2], v[3], DEFAULT_ZETA_G)


def hermite(k: int, h) -> np.ndarray:
    """Orthonormal probabilists' Hermite polynomial of degree k.

    Three-term recurrence on the normalized family:
    phi_{k+1} = (h phi_k - sqrt(k) phi_{k-1}) / sqrt(k+1).
    """
    if k < 0:
        raise ValueError("degree must be non-negative")
    h = np.asarray(h, dtype=float)
    prev = np.ones_like(h)
    if k == 0:
        return prev
    cur = h.copy()
    for j in range(1, k):
        prev, cur = cur, (h * cur - np.sqrt(j) * prev) / np.sqrt(j + 1.0)
    return cur


def hermite_table(max_degree: int, h: np.ndarray) -> np.ndarray:
    """All normalized Hermite values up to max_degree; shape (max_degree+1, ...)."""
    h = np.asarray(h, dtype=float)
    out = np.empty((max_degree + 1,) + h.shape)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = h
    for j in range(1, max_degree):
        out[j + 1] = (h * out[j] - np.sqrt(j) * out[j - 1]) / np.sqrt(j + 1.0)
    return out


@dataclass(frozen=True)
class MultiIndex:
    """Degrees of the tensor-product basis term (input dims + latent dim)."""

    degrees: tuple

    def __post_init__(self):
        if any(d < 0 for d in self.degrees):
            raise ValueError("degrees must be non-negative")
        object.__setattr__(self, "degrees", tuple(int(d) for d in self.degrees))

    @property
    def total_degree(self) -> int:
        return sum(self.degrees)


@dataclass(frozen=True)
class TruncationSet:
    """Hyperbolic (q-norm) truncation of the multi-index set."""

    indices: tuple
    max_degree: int
    q_norm: float

    def __len__(self) -> int:
        return len(self.indices)

    def degree_matrix(self) -> np.ndarray:
        return np.array([mi.degrees for mi in self.indices], dtype=int)


def build_truncation(dims: int, p: int, q: float = 1.0) -> TruncationSet:
    """All multi-indices with ||alpha||_q <= p, in graded lexicographic order."""
    if p < 0:
        raise ValueError("max degree must be non-negative")
    if not 0.0 < q <= 1.0:
        raise ValueError("q-norm must lie in (0, 1]")
    kept = []
    for alpha in product(range(p + 1), repeat=dims):
        norm = sum(a**q for a in alpha) ** (1.0 / q)
        if norm <= p + 1e-12:
            kept.append(alpha)
    kept.sort(key=lambda a: (sum(a), a))
    indices = tuple(MultiIndex(a) for a in kept)
    return TruncationSet(indices, p, q)


def basis_eval(alpha: MultiIndex, h: np.ndarray, z: float) -> float:
    """Evaluate one tensor-product basis term at (h, z)."""
    h = np.asarray(h, dtype=float)
    val = 1.0
    for d, hj in zip(alpha.degrees[:-1], h):
        val *= float(hermite(d, hj))
    return val * float(hermite(alpha.degrees[-1], z))


def basis_matrix_split(
    trunc: TruncationSet, h: np.ndarray
) -> tuple[np.ndarray, int]:
    """Input-side basis values for all indices; latent factor left out.

    Returns (B, max_z_degree) with B of shape (n_points, n_terms) holding
    prod_j phi_{alpha_j}(h_j) for the input dimensions only.
    """
    h = np.asarray(h, dtype=float)
    if h.ndim == 1:
        h = h[None, :]
    deg = trunc.degree_matrix()
    n_in = h.shape[1]
    if deg.shape[1] != n_in + 1:
        raise ValueError("truncation dimension does not match inputs + latent")
    pmax = int(deg.max()) if deg.size else 0
    tables = [hermite_table(pmax, h[:, j]) for j in range(n_in)]
    B = np.ones((h.shape[0], len(trunc)))
    for t, alpha in enumerate(deg):
        for j in range(n_in):
            if alpha[j] > 0:
                B[:, t] *= tables[j][alpha[j]]
    return B, pmax


def latent_factors(trunc: TruncationSet, z: np.ndarray) -> np.ndarray:
    """phi_{alpha_z}(z) for every index; shape (n_terms, len(z))."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    deg = trunc.degree_matrix()
    pmax = int(deg.max()) if deg.size else 0
    table = hermite_table(pmax, z)
    return table[deg[:, -1]]
