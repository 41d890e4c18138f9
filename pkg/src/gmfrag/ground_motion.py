"""Site-based stochastic ground motion model.

Synthetic accelerograms are generated as a stationary, unit-variance
filtered-white-noise process (normalized Kanai-Tajimi spectrum with a
second-order high-pass filter) multiplied by a gamma time-modulating
function.  The model parameters (expected Arias energy, time at 45% of
the energy, 5-95% effective duration, main frequency) follow a joint
lognormal distribution with a Gaussian copula; the bandwidth parameter
is fixed at 0.9.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import optimize, special, stats

TWO_PI = 2.0 * math.pi

#: Joint lognormal model fitted to the 71-record far-field catalog.
CATALOG_LOG_MEANS = np.array([-4.61, 2.55, 2.67, 1.42])
CATALOG_LOG_STDS = np.array([1.45, 0.90, 0.53, 0.59])
CATALOG_CORRELATION = np.array(
    [
        [1.0, 0.015, -0.23, -0.13],
        [0.015, 1.0, 0.68, -0.36],
        [-0.23, 0.68, 1.0, -0.11],
        [-0.13, -0.36, -0.11, 1.0],
    ]
)

DEFAULT_ZETA_G = 0.9


class FitError(RuntimeError):
    """Raised when the modulating-function fit cannot be completed."""


@dataclass(frozen=True)
class GroundMotionParams:
    """Ground motion model parameters, regarded as the IM vector.

    Parameters
    ----------
    ia : float
        Expected total energy of the accelerogram, integral of E[a^2(t)]
        with acceleration in g [g^2 s].
    t_mid : float
        Time at which 45% of the expected energy is reached [s].
    d595 : float
        Effective duration t95 - t5 [s].
    omega_g : float
        Main frequency of the Kanai-Tajimi spectrum [rad/s].
    zeta_g : float
        Bandwidth parameter, fixed to 0.9 by default.
    """

    ia: float
    t_mid: float
    d595: float
    omega_g: float
    zeta_g: float = DEFAULT_ZETA_G

    def __post_init__(self):
        if not (
            self.ia > 0
            and self.t_mid > 0
            and self.d595 > 0
            and self.omega_g > 0
            and self.zeta_g > 0
        ):
            raise ValueError("all ground motion parameters must be positive")
        if self.zeta_g > 1.0:
            raise ValueError("zeta_g must lie in (0, 1]")

    def as_array(self):
        """Return the four free parameters (ia, t_mid, d595, omega_g)."""
        return np.array([self.ia, self.t_mid, self.d595, self.omega_g])


@dataclass(frozen=True)
class ParamsJointModel:
    """Joint lognormal distribution of the free ground motion parameters."""

    log_means: np.ndarray
    log_stds: np.ndarray
    correlation: np.ndarray
    cholesky: np.ndarray = field(default=None)

    def __post_init__(self):
        mu = np.asarray(self.log_means, dtype=float)
        sig = np.asarray(self.log_stds, dtype=float)
        R = np.asarray(self.correlation, dtype=float)
        if mu.shape != (4,) or sig.shape != (4,) or R.shape != (4, 4):
            raise ValueError("joint model requires 4 lognormal marginals")
        if np.any(sig <= 0):
            raise ValueError("log-standard deviations must be positive")
        if not np.allclose(R, R.T, atol=1e-12) or not np.allclose(
            np.diag(R), 1.0, atol=1e-12
        ):
            raise ValueError("correlation matrix must be symmetric with unit diagonal")
        try:
            L = np.linalg.cholesky(R)
        except np.linalg.LinAlgError as exc:
            raise ValueError("correlation matrix is not positive definite") from exc
        object.__setattr__(self, "log_means", mu)
        object.__setattr__(self, "log_stds", sig)
        object.__setattr__(self, "correlation", R)
        object.__setattr__(self, "cholesky", L)

    @classmethod
    def catalog_default(cls) -> "ParamsJointModel":
        """Joint model fitted to the far-field record catalog."""
        return cls(CATALOG_LOG_MEANS, CATALOG_LOG_STDS, CATALOG_CORRELATION)


def sample_params(
    joint: ParamsJointModel, n: int, rng: np.random.Generator
) -> list[GroundMotionParams]:
    """Draw `n` parameter sets from the joint lognormal model.

    Each draw is exp(mu + sigma * (L u)) with u iid standard normal and
    L the Cholesky factor of the copula correlation.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    u = rng.standard_normal((n, 4))
    logs = joint.log_means + joint.log_stds * (u @ joint.cholesky.T)
    vals = np.exp(logs)
    return [
        GroundMotionParams(v[0], v[1], v[2], v[3], DEFAULT_ZETA_G) for v in vals
    ]


@dataclass(frozen=True)
class ModulatingParams:
    """Gamma modulating function q(t) = alpha1 * t^(alpha2-1) * exp(-alpha3 t).

    The normalized energy q^2 is proportional to a gamma density with
    shape 2*alpha2 - 1 and rate 2*alpha3, which makes the fit of the
    time parameters a quantile-matching problem.
    """

    alpha1: float
    alpha2: float
    alpha3: float
    log_alpha1: float = field(default=None)

    def __post_init__(self):
        if self.alpha2 <= 1.0:
            raise ValueError("alpha2 must exceed 1")
        if self.alpha3 <= 0.0:
            raise ValueError("alpha3 must be positive")
        if self.log_alpha1 is None:
            object.__setattr__(self, "log_alpha1", math.log(self.alpha1))

    @property
    def energy_shape(self) -> float:
        """Shape of the gamma law followed by the cumulative energy."""
        return 2.0 * self.alpha2 - 1.0

    @property
    def energy_rate(self) -> float:
        return 2.0 * self.alpha3

    def values(self, t: np.ndarray) -> np.ndarray:
        """Evaluate q(t) on a time grid (log-domain for overflow safety)."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(
            self.log_alpha1
            + (self.alpha2 - 1.0) * np.log(t[pos])
            - self.alpha3 * t[pos]
        )
        return out

    def total_energy(self) -> float:
        """Integral of q^2 over (0, inf)."""
        k, lam = self.energy_shape, self.energy_rate
        return math.exp(
            2.0 * self.log_alpha1 + special.gammaln(k) - k * math.log(lam)
        )

    def energy_quantile(self, p: float) -> float:
        """Time at which the fraction `p` of the total energy is reached."""
        return stats.gamma.ppf(p, self.energy_shape, scale=1.0 / self.energy_rate)


def _quantile_ratio(k: float) -> float:
    q = stats.gamma.ppf([0.45, 0.05, 0.95], k)
    return q[0] / (q[2] - q[1])


def fit_modulating(ia: float, t_mid: float, d595: float) -> ModulatingParams:
    """Fit the gamma modulating function to (ia, t_mid, d595).

    The shape is found from the scale-free quantile ratio t_mid / d595,
    the rate from the 45% quantile, and the amplitude from the total
    energy constraint int q^2 dt = ia.

    Raises
    ------
    FitError
        If the target ratio is below the exponential-limit bound (shape
        constraint alpha2 > 1) or the root search fails.
    """
    if not (ia > 0 and t_mid > 0 and d595 > 0):
        raise ValueError("ia, t_mid, d595 must be positive")
    target = t_mid / d595
    k_lo = 1.0 + 1e-9
    ratio_lo = _quantile_ratio(k_lo)
    if target <= ratio_lo:
        raise FitError(
            f"t_mid/d595 = {target:.4g} not achievable with shape > 1 "
            f"(minimum ratio {ratio_lo:.4g})"
        )
    k_hi = 2.0
    while _quantile_ratio(k_hi) < target:
        k_hi *= 2.0
        if k_hi > 1e8:
            raise FitError("shape search diverged")
    try:
        k = optimize.brentq(
            lambda kk: _quantile_ratio(kk) - target, k_lo, k_hi, xtol=1e-14, rtol=1e-15
        )
    except (ValueError, RuntimeError) as exc:
        raise FitError(f"shape root-find failed: {exc}") from exc
    lam = stats.gamma.ppf(0.45, k) / t_mid
    log_a1 = 0.5 * (math.log(ia) + k * math.log(lam) - special.gammaln(k))
    alpha2 = 0.5 * (k + 1.0)
    alpha3 = 0.5 * lam
    alpha1 = math.exp(log_a1) if log_a1 < 700 else math.inf
    return ModulatingParams(alpha1, alpha2, alpha3, log_alpha1=log_a1)


@dataclass(frozen=True)
class SynthesisConfig:
    """Discretization of the spectral-representation synthesis.

    duration=None selects max(40 s, time at 99.5% modulating energy).
    """

    dt: float = 0.01
    duration: float | None = None
    n_freq: int = 2048
    omega_cut: float = TWO_PI * 0.2
    zeta_hp: float = 1.0

    def __post_init__(self):
        if self.dt <= 0 or self.n_freq < 2:
            raise ValueError("invalid discretization")
        if self.duration is not None and self.duration <= 0:
            raise ValueError("duration must be positive")

    def frequency_grid(self) -> tuple[np.ndarray, float]:
        """Band-center frequencies on (0, pi/dt] and the band width."""
        domega = (math.pi / self.dt) / self.n_freq
        omegas = (np.arange(self.n_freq) + 0.5) * domega
        return omegas, domega


DEFAULT_SYNTHESIS = SynthesisConfig()


def _kt_raw(omega, omega_g, zeta_g):
    w2 = np.square(omega)
    wg2 = omega_g * omega_g
    b = 4.0 * zeta_g * zeta_g * wg2 * w2
    return (wg2 * wg2 + b) / (np.square(w2 - wg2) + b)


def kt_psd(
    omega,
    omega_g: float,
    zeta_g: float,
    cfg: SynthesisConfig = DEFAULT_SYNTHESIS,
):
    """Normalized one-sided Kanai-Tajimi spectral density.

    The constant is chosen so that the one-sided integral over the
    configured frequency grid equals one (unit-variance process).
    """
    if omega_g <= 0:
        raise ValueError("omega_g must be positive")
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("omega must be non-negative")
    grid, domega = cfg.frequency_grid()
    c = 1.0 / (np.sum(_kt_raw(grid, omega_g, zeta_g)) * domega)
    return c * _kt_raw(omega, omega_g, zeta_g)


def highpass_gain_sq(omega, omega_cut: float, zeta_hp: float):
    """Squared magnitude of the second-order high-pass filter."""
    w2 = np.square(np.asarray(omega, dtype=float))
    wc2 = omega_cut * omega_cut
    return w2 * w2 / (np.square(wc2 - w2) + 4.0 * zeta_hp * zeta_hp * wc2 * w2)


def filtered_psd(
    omega_g: float, zeta_g: float, cfg: SynthesisConfig = DEFAULT_SYNTHESIS
) -> tuple[np.ndarray, np.ndarray, float]:
    """High-pass filtered KT spectrum on the grid, renormalized to unit variance.

    Returns (grid frequencies, spectral values, band width).
    """
    grid, domega = cfg.frequency_grid()
    s = _kt_raw(grid, omega_g, zeta_g) * highpass_gain_sq(
        grid, cfg.omega_cut, cfg.zeta_hp
    )
    s /= np.sum(s) * domega
    return grid, s, domega


@dataclass(frozen=True)
class AccelTimeSeries:
    """Uniformly sampled ground acceleration realization [g]."""

    dt: float
    values: np.ndarray
    warnings: tuple = ()

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if vals.ndim != 1 or vals.size < 2:
            raise ValueError("series needs at least two samples")
        if not np.all(np.isfinite(vals)):
            raise ValueError("series contains non-finite values")
        object.__setattr__(self, "values", vals)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.values.size)


def stationary_core(
    noise_cos: np.ndarray,
    noise_sin: np.ndarray,
    spectrum: np.ndarray,
    domega: float,
    n_samples: int,
) -> np.ndarray:
    """Evaluate the unit-variance stationary process on the sample grid.

    The frequency grid omega_k = (k - 1/2) d_omega with d_omega * dt =
    pi / K maps the trigonometric sum onto a length-2K inverse FFT; the
    process is periodic up to a sign over blocks of 2K samples.
    """
    K = spectrum.size
    amps = np.sqrt(spectrum * domega)
    coeffs = np.zeros(2 * K, dtype=complex)
    coeffs[1 : K + 1] = amps * (noise_cos - 1j * noise_sin)
    block = 2 * K * np.fft.ifft(coeffs)
    phase = np.exp(-1j * math.pi * np.arange(2 * K) / (2 * K))
    base = np.real(phase * block)
    reps = -(-n_samples // (2 * K))
    signs = np.repeat((-1.0) ** np.arange(reps), 2 * K)
    return (np.tile(base, reps) * signs)[:n_samples]


def synthesize(
    x: GroundMotionParams,
    cfg: SynthesisConfig = DEFAULT_SYNTHESIS,
    rng: np.random.Generator | None = None,
) -> AccelTimeSeries:
    """Generate one accelerogram realization for the parameter set `x`.

    a(t) = q(t) * s(t), with q the fitted gamma modulating function and
    s the unit-variance stationary core synthesized from 2K iid normal
    aleatory variables.
    """
    if rng is None:
        rng = np.random.default_rng()
    mod = fit_modulating(x.ia, x.t_mid, x.d595)
    duration = cfg.duration
    if duration is None:
        duration = max(40.0, mod.energy_quantile(0.995))
    n = int(round(duration / cfg.dt)) + 1
    t = cfg.dt * np.arange(n)
    _, spectrum, domega = filtered_psd(x.omega_g, x.zeta_g, cfg)
    xi_c = rng.standard_normal(cfg.n_freq)
    xi_s = rng.standard_normal(cfg.n_freq)
    s = stationary_core(xi_c, xi_s, spectrum, domega, n)
    q = mod.values(t)
    warnings = ()
    coverage = stats.gamma.cdf(
        t[-1], mod.energy_shape, scale=1.0 / mod.energy_rate
    )
    if coverage < 0.99:
        warnings = (
            f"duration covers only {coverage:.3f} of the modulating energy",
        )
    return AccelTimeSeries(cfg.dt, q * s, warnings)


@njit(cache=True)
def _sdof_peak_disp(a, dt, omega_n, zeta):
    """Peak |u| of a linear SDOF oscillator under base acceleration `a`.

    Exact recursive solution for piecewise-linear excitation.
    """
    wd = omega_n * math.sqrt(1.0 - zeta * zeta)
    w2 = omega_n * omega_n
    e = math.exp(-zeta * omega_n * dt)
    swd = math.sin(wd * dt)
    cwd = math.cos(wd * dt)
    zw = zeta * omega_n

    u = 0.0
    v = 0.0
    peak = 0.0
    for i in range(a.size - 1):
        p0 = -a[i]
        dp = (-a[i + 1] - p0) / dt
        # particular solution for p(t) = p0 + dp * t
        up0 = p0 / w2 - 2.0 * zw * dp / (w2 * w2)
        up1 = dp / w2
        ch = u - up0
        sh = (v + zw * ch - up1) / wd
        u = e * (ch * cwd + sh * swd) + up0 + up1 * dt
        v = (
            e * ((wd * sh - zw * ch) * cwd - (wd * ch + zw * sh) * swd)
            + up1
        )
        au = abs(u)
        if au > peak:
            peak = au
    return peak


def compute_ims(
    ts: AccelTimeSeries, period: float, damping: float
) -> dict:
    """Classical intensity measures of a synthetic record.

    Returns peak ground acceleration [g], pseudo-spectral acceleration
    at the given period and damping [g], and the trapezoid integral of
    a^2 [g^2 s].
    """
    if period <= 0:
        raise ValueError("period must be positive")
    if not 0.0 < damping < 1.0:
        raise ValueError("damping ratio must lie in (0, 1)")
    a = ts.values
    pga = float(np.max(np.abs(a)))
    omega_n = TWO_PI / period
    peak_u = _sdof_peak_disp(a, ts.dt, omega_n, damping)
    sa = omega_n * omega_n * peak_u
    arias = float(np.trapezoid(a * a, dx=ts.dt))
    return {"pga": pga, "sa": float(sa), "arias_integral": arias}


def export_batch(
    series: list[AccelTimeSeries],
    params: list[GroundMotionParams],
    seeds: list[int],
    cfg: SynthesisConfig,
    csv_path,
    sidecar_path,
) -> None:
    """Write a realization batch as CSV rows `dt,n,values...` plus a JSON sidecar."""
    with open(csv_path, "w") as fh:
        fh.write("dt,n,values...\n")
        for ts in series:
            vals = ",".join(repr(float(v)) for v in ts.values)
            fh.write(f"{float(ts.dt)!r},{ts.values.size},{vals}\n")
    meta = {
        "params": [list(p.as_array()) + [p.zeta_g] for p in params],
        "seeds": list(seeds),
        "config": {
            "dt": cfg.dt,
            "duration": cfg.duration,
            "n_freq": cfg.n_freq,
            "omega_cut": cfg.omega_cut,
            "zeta_hp": cfg.zeta_hp,
        },
    }
    with open(sidecar_path, "w") as fh:
        json.dump(meta, fh, indent=2)


def export_param_samples(params: list[GroundMotionParams], path) -> None:
    """Write parameter samples as CSV columns `ia,t_mid,d595,omega_g`."""
    with open(path, "w") as fh:
        fh.write("ia,t_mid,d595,omega_g\n")
        for p in params:
            fh.write(
                f"{float(p.ia)!r},{float(p.t_mid)!r},"
                f"{float(p.d595)!r},{float(p.omega_g)!r}\n"
            )
