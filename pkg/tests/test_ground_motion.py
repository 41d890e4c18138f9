import numpy as np
import pytest
from scipy import integrate as sint
from scipy import optimize, stats

from gmfrag.ground_motion import (
    AccelTimeSeries,
    FitError,
    GroundMotionParams,
    ParamsJointModel,
    SynthesisConfig,
    compute_ims,
    filtered_psd,
    fit_modulating,
    highpass_gain_sq,
    kt_psd,
    sample_params,
    stationary_core,
    synthesize,
)

TABLE_MEDIANS = np.exp([-4.61, 2.55, 2.67, 1.42])


def test_joint_model_validation():
    with pytest.raises(ValueError):
        ParamsJointModel(
            [-4.61, 2.55, 2.67, 1.42],
            [1.45, 0.90, 0.53, 0.59],
            np.array(
                [
                    [1.0, 0.99, 0.99, 0.0],
                    [0.99, 1.0, -0.99, 0.0],
                    [0.99, -0.99, 1.0, 0.0],
                    [0.0, 0.0, 0.0, 1.0],
                ]
            ),
        )
    joint = ParamsJointModel.catalog_default()
    assert np.allclose(joint.cholesky @ joint.cholesky.T, joint.correlation, atol=1e-12)


def test_params_validation():
    with pytest.raises(ValueError):
        GroundMotionParams(-0.1, 8.0, 15.0, 5.0)
    with pytest.raises(ValueError):
        GroundMotionParams(0.1, 8.0, 15.0, 5.0, zeta_g=1.5)


def test_sample_params_medians_forced_by_zero_noise():
    joint = ParamsJointModel.catalog_default()
    # u = 0 maps to the marginal medians
    med = np.exp(joint.log_means)
    assert np.allclose(med, [0.00995, 12.81, 14.44, 4.14], rtol=1e-3)


def test_sample_params_independence_case():
    joint = ParamsJointModel(
        [-4.61, 2.55, 2.67, 1.42], [1.45, 0.90, 0.53, 0.59], np.eye(4)
    )
    rng = np.random.default_rng(0)
    draws = sample_params(joint, 100_000, rng)
    logs = np.log(np.array([p.as_array() for p in draws]))
    corr = np.corrcoef(logs.T)
    off = corr[~np.eye(4, dtype=bool)]
    assert np.all(np.abs(off) < 0.02)


def test_sample_params_catalog_correlation():
    joint = ParamsJointModel.catalog_default()
    rng = np.random.default_rng(1)
    draws = sample_params(joint, 100_000, rng)
    logs = np.log(np.array([p.as_array() for p in draws]))
    corr = np.corrcoef(logs[:, 1], logs[:, 2])[0, 1]
    assert corr == pytest.approx(0.68, abs=0.02)
    assert all(p.zeta_g == 0.9 for p in draws[:10])


def numeric_time_quantiles(mod, probs):
    """Oracle: invert the cumulative energy of q^2 by quadrature."""
    t_hi = mod.energy_quantile(1 - 1e-10) * 2

    def energy(t):
        val, _ = sint.quad(
            lambda s: mod.values(np.array([s]))[0] ** 2, 0, t, limit=200
        )
        return val

    total = energy(t_hi)
    out = []
    for p in probs:
        out.append(
            optimize.brentq(lambda t: energy(t) - p * total, 1e-9, t_hi, xtol=1e-12)
        )
    return np.array(out), total


def test_fit_modulating_quantile_oracle():
    mod = fit_modulating(0.05, 8.0, 15.0)
    (t05, t45, t95), total = numeric_time_quantiles(mod, [0.05, 0.45, 0.95])
    assert t45 == pytest.approx(8.0, rel=1e-6)
    assert t95 - t05 == pytest.approx(15.0, rel=1e-6)
    assert total == pytest.approx(0.05, rel=1e-6)


def test_fit_modulating_scale_separability():
    m1 = fit_modulating(0.05, 8.0, 15.0)
    m2 = fit_modulating(0.10, 8.0, 15.0)
    assert m2.alpha2 == pytest.approx(m1.alpha2, rel=1e-12)
    assert m2.alpha3 == pytest.approx(m1.alpha3, rel=1e-12)
    assert m2.alpha1 == pytest.approx(np.sqrt(2) * m1.alpha1, rel=1e-10)


def test_fit_modulating_infeasible_ratio():
    # below the exponential-limit quantile ratio
    with pytest.raises(FitError):
        fit_modulating(0.05, 1.0, 100.0)


def test_kt_psd_grid_normalization():
    rng = np.random.default_rng(2)
    cfg = SynthesisConfig()
    grid, domega = cfg.frequency_grid()
    for _ in range(20):
        wg = np.exp(rng.normal(1.42, 0.59))
        zg = rng.uniform(0.1, 1.0)
        total = np.sum(kt_psd(grid, wg, zg, cfg)) * domega
        assert total == pytest.approx(1.0, abs=1e-4)


def test_kt_psd_peak_ratio_closed_form():
    zg = 0.9
    ratio = kt_psd(4.14, 4.14, zg) / kt_psd(0.0, 4.14, zg)
    assert ratio == pytest.approx((1 + 4 * zg**2) / (4 * zg**2), rel=1e-12)


def test_kt_psd_concentrates_for_narrow_band():
    wg = 4.0
    cfg = SynthesisConfig()
    grid, domega = cfg.frequency_grid()
    vals = kt_psd(grid, wg, 0.05, cfg)
    near = vals[(grid >= 0.9 * wg) & (grid <= 1.1 * wg)].sum() * domega
    far = vals[(grid >= 2.9 * wg) & (grid <= 3.1 * wg)].sum() * domega
    assert near > far


def test_kt_psd_rejects_bad_args():
    with pytest.raises(ValueError):
        kt_psd(1.0, -1.0, 0.9)
    with pytest.raises(ValueError):
        kt_psd(-1.0, 4.0, 0.9)


def test_highpass_zero_at_origin():
    cfg = SynthesisConfig()
    assert highpass_gain_sq(0.0, cfg.omega_cut, cfg.zeta_hp) == 0.0
    _, spec, domega = filtered_psd(4.14, 0.9, cfg)
    assert np.sum(spec) * domega == pytest.approx(1.0, rel=1e-12)


def test_synthesize_deterministic():
    x = GroundMotionParams(*TABLE_MEDIANS)
    a = synthesize(x, rng=np.random.default_rng(7))
    b = synthesize(x, rng=np.random.default_rng(7))
    assert np.array_equal(a.values, b.values)


def test_synthesize_energy_matches_ia():
    x = GroundMotionParams(*TABLE_MEDIANS)
    energies = []
    for seed in range(100):
        ts = synthesize(x, rng=np.random.default_rng(seed))
        energies.append(np.trapezoid(ts.values**2, dx=ts.dt))
    assert np.mean(energies) == pytest.approx(x.ia, rel=0.10)


def test_stationary_core_fft_matches_direct_sum():
    cfg = SynthesisConfig(n_freq=128, dt=0.02)
    grid, domega = cfg.frequency_grid()
    _, spec, _ = filtered_psd(5.0, 0.9, cfg)
    rng = np.random.default_rng(0)
    xc, xs = rng.standard_normal(128), rng.standard_normal(128)
    n = 700  # beyond one FFT block, exercises the sign tiling
    s = stationary_core(xc, xs, spec, domega, n)
    t = cfg.dt * np.arange(n)
    amps = np.sqrt(spec * domega)
    direct = (
        amps * (xc * np.cos(np.outer(t, grid)) + xs * np.sin(np.outer(t, grid)))
    ).sum(axis=1)
    assert np.abs(s - direct).max() < 1e-10


def test_stationary_core_linear_in_noise():
    cfg = SynthesisConfig()
    grid, domega = cfg.frequency_grid()
    _, spec, _ = filtered_psd(4.14, 0.9, cfg)
    rng = np.random.default_rng(3)
    xc, xs = rng.standard_normal(2048), rng.standard_normal(2048)
    s = stationary_core(xc, xs, spec, domega, 2000)
    s_neg = stationary_core(-xc, -xs, spec, domega, 2000)
    assert np.array_equal(s_neg, -s)


def test_synthesize_warns_on_short_duration():
    x = GroundMotionParams(*TABLE_MEDIANS)
    ts = synthesize(x, SynthesisConfig(duration=5.0), np.random.default_rng(0))
    assert ts.warnings


def test_compute_ims_zero_record():
    ts = AccelTimeSeries(0.01, np.zeros(100))
    ims = compute_ims(ts, 1.0, 0.02)
    assert ims == {"pga": 0.0, "sa": 0.0, "arias_integral": 0.0}


def test_compute_ims_resonant_sine():
    period, damping, amp = 1.0, 0.02, 0.1
    omega = 2 * np.pi / period
    t = np.arange(0, 200, 0.005)
    ts = AccelTimeSeries(0.005, amp * np.sin(omega * t))
    ims = compute_ims(ts, period, damping)
    assert ims["sa"] == pytest.approx(amp / (2 * damping), rel=0.05)


def test_compute_ims_constant_arias():
    ts = AccelTimeSeries(0.01, np.ones(201))
    ims = compute_ims(ts, 1.0, 0.02)
    assert ims["arias_integral"] == pytest.approx(2.0, rel=1e-12)
    assert ims["pga"] == 1.0


def test_sampling_marginal_medians():
    joint = ParamsJointModel.catalog_default()
    rng = np.random.default_rng(11)
    draws = sample_params(joint, 100_000, rng)
    vals = np.array([p.as_array() for p in draws])
    med = np.median(vals, axis=0)
    assert np.allclose(med, np.exp(joint.log_means), rtol=0.03)


def test_export_batch_and_params(tmp_path):
    from gmfrag.ground_motion import export_batch, export_param_samples

    x = GroundMotionParams(*TABLE_MEDIANS)
    cfg = SynthesisConfig(duration=10.0)
    series = [synthesize(x, cfg, np.random.default_rng(s)) for s in (0, 1)]
    csv_path = tmp_path / "batch.csv"
    sidecar = tmp_path / "batch.json"
    export_batch(series, [x, x], [0, 1], cfg, csv_path, sidecar)
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "dt,n,values..."
    first = lines[1].split(",")
    assert float(first[0]) == cfg.dt and int(first[1]) == series[0].values.size
    # repr round-trips the values exactly
    assert float(first[2]) == series[0].values[0]
    import json

    meta = json.loads(sidecar.read_text())
    assert meta["seeds"] == [0, 1]
    assert meta["config"]["dt"] == cfg.dt

    ppath = tmp_path / "params.csv"
    export_param_samples([x], ppath)
    rows = ppath.read_text().strip().splitlines()
    assert rows[0] == "ia,t_mid,d595,omega_g"
    assert np.allclose([float(v) for v in rows[1].split(",")], x.as_array())
