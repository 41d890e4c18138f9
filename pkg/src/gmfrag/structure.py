"""Nonlinear time-history solver for the 3-story Bouc-Wen shear frame.

The frame is idealized as three lumped masses with interstory Bouc-Wen
restoring forces and per-story viscous damping on the interstory
velocities.  The solver is a fixed-step explicit RK4 on the 9-state
system (floor displacements, velocities, and hysteretic displacements),
sub-stepped below the ground-motion sampling rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import linalg

from gmfrag.ground_motion import AccelTimeSeries

GRAVITY = 9.81  # m/s^2


class SolverError(RuntimeError):
    """Raised when the time integration diverges."""


@dataclass(frozen=True)
class BoucWenParams:
    """Parameters of the smooth hysteretic law."""

    alpha: float = 0.1
    n: float = 5.0
    gamma: float = 1.0 / (2 * 0.01) ** 5
    eta: float = 1.0 / (2 * 0.01) ** 5
    a_bw: float = 1.0
    delta_y: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.n < 1.0:
            raise ValueError("exponent n must be >= 1")
        if self.gamma + self.eta <= 0.0:
            raise ValueError("gamma + eta must be positive")

    @property
    def z_ultimate(self) -> float:
        """Stationary bound of the hysteretic displacement."""
        return (self.a_bw / (self.gamma + self.eta)) ** (1.0 / self.n)


@dataclass(frozen=True)
class ShearFrameModel:
    """Masses, dampings, stiffnesses, and hysteresis of the shear frame."""

    masses: np.ndarray
    dampings: np.ndarray
    stiffnesses: np.ndarray
    bw: BoucWenParams

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        c = np.asarray(self.dampings, dtype=float)
        k = np.asarray(self.stiffnesses, dtype=float)
        if m.shape != (3,) or c.shape != (3,) or k.shape != (3,):
            raise ValueError("model requires three stories")
        if np.any(m <= 0) or np.any(c <= 0) or np.any(k <= 0):
            raise ValueError("masses, dampings, stiffnesses must be positive")
        object.__setattr__(self, "masses", m)
        object.__setattr__(self, "dampings", c)
        object.__setattr__(self, "stiffnesses", k)

    @classmethod
    def default(cls, alpha: float = 0.1) -> "ShearFrameModel":
        """Reference 3-story frame (1e6 kg floors, 1% drift yield)."""
        return cls(
            masses=np.full(3, 1.0e6),
            dampings=np.full(3, 1.73e6),
            stiffnesses=np.array([3.0e8, 2.4e8, 1.5e8]),
            bw=BoucWenParams(alpha=alpha),
        )

    def stiffness_matrix(self) -> np.ndarray:
        k1, k2, k3 = self.stiffnesses
        return np.array(
            [[k1 + k2, -k2, 0.0], [-k2, k2 + k3, -k3], [0.0, -k3, k3]]
        )

    def damping_matrix(self) -> np.ndarray:
        c1, c2, c3 = self.dampings
        return np.array(
            [[c1 + c2, -c2, 0.0], [-c2, c2 + c3, -c3], [0.0, -c3, c3]]
        )


@dataclass(frozen=True)
class ResponseRecord:
    """Interstory drift and hysteretic histories sampled at the input rate."""

    dt: float
    drifts: np.ndarray
    hysteretic: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.drifts, dtype=float)
        z = np.asarray(self.hysteretic, dtype=float)
        if d.ndim != 2 or d.shape[0] != 3 or z.shape != d.shape:
            raise ValueError("drifts and hysteretic must be 3 x T")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(z))):
            raise ValueError("response contains non-finite values")
        object.__setattr__(self, "drifts", d)
        object.__setattr__(self, "hysteretic", z)


def bw_rate(v_dot: float, z: float, p: BoucWenParams) -> float:
    """Rate of the hysteretic displacement.

    dz/dt = A v' - gamma |v'| |z|^(n-1) z - eta v' |z|^n
    """
    azn = abs(z) ** (p.n - 1.0)
    return (
        p.a_bw * v_dot
        - p.gamma * abs(v_dot) * azn * z
        - p.eta * v_dot * azn * abs(z)
    )


def restoring_force(v: float, z: float, story: int, model: ShearFrameModel) -> float:
    """Interstory restoring force q_i = k_i [alpha v + (1 - alpha) z]."""
    if story not in (1, 2, 3):
        raise ValueError("story must be 1, 2, or 3")
    k = model.stiffnesses[story - 1]
    a = model.bw.alpha
    return k * (a * v + (1.0 - a) * z)


@njit(cache=True)
def _rk4_core(ag, dt, nsub, m, c, k, alpha, n, gamma, eta, a_bw):
    nt = ag.size
    drifts = np.zeros((3, nt))
    zs = np.zeros((3, nt))
    y = np.zeros(9)  # u1,u2,u3, du1,du2,du3, z1,z2,z3
    h = dt / nsub
    dy = np.zeros(9)
    k1 = np.zeros(9)
    k2 = np.zeros(9)
    k3 = np.zeros(9)
    k4 = np.zeros(9)
    yt = np.zeros(9)

    for i in range(nt - 1):
        a0 = ag[i]
        a1 = ag[i + 1]
        for s in range(nsub):
            f0 = a0 + (a1 - a0) * (s / nsub)
            fm = a0 + (a1 - a0) * ((s + 0.5) / nsub)
            f1 = a0 + (a1 - a0) * ((s + 1.0) / nsub)
            _deriv(y, f0, m, c, k, alpha, n, gamma, eta, a_bw, k1)
            for j in range(9):
                yt[j] = y[j] + 0.5 * h * k1[j]
            _deriv(yt, fm, m, c, k, alpha, n, gamma, eta, a_bw, k2)
            for j in range(9):
                yt[j] = y[j] + 0.5 * h * k2[j]
            _deriv(yt, fm, m, c, k, alpha, n, gamma, eta, a_bw, k3)
            for j in range(9):
                yt[j] = y[j] + h * k3[j]
            _deriv(yt, f1, m, c, k, alpha, n, gamma, eta, a_bw, k4)
            for j in range(9):
                y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        if not (
            math.isfinite(y[0]) and math.isfinite(y[1]) and math.isfinite(y[2])
        ):
            return drifts, zs, (i + 1) * dt
        drifts[0, i + 1] = y[0]
        drifts[1, i + 1] = y[1] - y[0]
        drifts[2, i + 1] = y[2] - y[1]
        zs[0, i + 1] = y[6]
        zs[1, i + 1] = y[7]
        zs[2, i + 1] = y[8]
    return drifts, zs, -1.0


@njit(cache=True, inline="always")
def _deriv(y, ag, m, c, k, alpha, n, gamma, eta, a_bw, out):
    # interstory drifts and velocities
    v1 = y[0]
    v2 = y[1] - y[0]
    v3 = y[2] - y[1]
    vd1 = y[3]
    vd2 = y[4] - y[3]
    vd3 = y[5] - y[4]
    z1 = y[6]
    z2 = y[7]
    z3 = y[8]

    q1 = k[0] * (alpha * v1 + (1.0 - alpha) * z1) + c[0] * vd1
    q2 = k[1] * (alpha * v2 + (1.0 - alpha) * z2) + c[1] * vd2
    q3 = k[2] * (alpha * v3 + (1.0 - alpha) * z3) + c[2] * vd3

    out[0] = y[3]
    out[1] = y[4]
    out[2] = y[5]
    out[3] = (-q1 + q2) / m[0] - ag
    out[4] = (-q2 + q3) / m[1] - ag
    out[5] = -q3 / m[2] - ag

    az1 = abs(z1) ** (n - 1.0)
    az2 = abs(z2) ** (n - 1.0)
    az3 = abs(z3) ** (n - 1.0)
    out[6] = a_bw * vd1 - gamma * abs(vd1) * az1 * z1 - eta * vd1 * az1 * abs(z1)
    out[7] = a_bw * vd2 - gamma * abs(vd2) * az2 * z2 - eta * vd2 * az2 * abs(z2)
    out[8] = a_bw * vd3 - gamma * abs(vd3) * az3 * z3 - eta * vd3 * az3 * abs(z3)


def integrate(
    model: ShearFrameModel,
    ag: AccelTimeSeries,
    gravity: float = GRAVITY,
    nsub: int = 10,
) -> ResponseRecord:
    """Run the nonlinear time-history analysis for a ground motion in g.

    Raises
    ------
    SolverError
        If the state diverges; the failure time is reported.
    """
    accel = ag.values * gravity
    drifts, zs, fail_t = _rk4_core(
        accel,
        ag.dt,
        nsub,
        model.masses,
        model.dampings,
        model.stiffnesses,
        model.bw.alpha,
        model.bw.n,
        model.bw.gamma,
        model.bw.eta,
        model.bw.a_bw,
    )
    if fail_t >= 0:
        raise SolverError(f"integration diverged at t = {fail_t:.3f} s")
    return ResponseRecord(ag.dt, drifts, zs)


def max_interstory_drift(r: ResponseRecord) -> float:
    """EDP: maximum absolute interstory drift over stories and time."""
    if r.drifts.size == 0:
        raise ValueError("empty response record")
    return float(np.max(np.abs(r.drifts)))


def fundamental_period(model: ShearFrameModel) -> float:
    """Fundamental elastic period from the generalized eigenproblem."""
    K = model.stiffness_matrix()
    M = np.diag(model.masses)
    lam = linalg.eigh(K, M, eigvals_only=True)
    return 2.0 * math.pi / math.sqrt(lam[0])


def dump_response(r: ResponseRecord, path) -> None:
    """Write the response history as CSV `t,v1,v2,v3,z1,z2,z3`."""
    t = r.dt * np.arange(r.drifts.shape[1])
    data = np.column_stack([t, r.drifts.T, r.hysteretic.T])
    header = "t,v1,v2,v3,z1,z2,z3"
    np.savetxt(path, data, delimiter=",", header=header, comments="")
