import numpy as np
import pytest

from gmfrag.metrics import (
    EmpiricalDistribution,
    ValidationBundle,
    empirical_ccdf,
    fragility_rel_mse,
    normalized_ws_error,
    wasserstein2_sq,
)


def brute_force_w2(xa, xb, ngrid=2_000_000):
    """Oracle: quantile-function integral on a dense uniform grid."""
    u = (np.arange(ngrid) + 0.5) / ngrid
    qa = np.sort(xa)[np.minimum((u * len(xa)).astype(int), len(xa) - 1)]
    qb = np.sort(xb)[np.minimum((u * len(xb)).astype(int), len(xb) - 1)]
    return float(np.mean((qa - qb) ** 2))


def test_w2_identical_is_zero():
    x = np.random.default_rng(0).standard_normal(1000)
    d = EmpiricalDistribution(x)
    assert wasserstein2_sq(d, d) == 0.0


def test_w2_translation():
    x = np.random.default_rng(1).standard_normal(5000)
    a = EmpiricalDistribution(x)
    b = EmpiricalDistribution(x + 2.5)
    assert wasserstein2_sq(a, b) == pytest.approx(2.5**2, rel=1e-12)


def test_w2_gaussian_shift_reference():
    rng = np.random.default_rng(2)
    a = EmpiricalDistribution(rng.standard_normal(100_000))
    b = EmpiricalDistribution(1.0 + rng.standard_normal(100_000))
    assert wasserstein2_sq(a, b) == pytest.approx(1.0, abs=0.02)


def test_w2_symmetry():
    rng = np.random.default_rng(3)
    a = EmpiricalDistribution(rng.standard_normal(137))
    b = EmpiricalDistribution(rng.exponential(size=542))
    assert wasserstein2_sq(a, b) == pytest.approx(wasserstein2_sq(b, a), rel=1e-12)


@pytest.mark.parametrize("na,nb", [(100, 100), (100, 237), (53, 1000), (7, 11)])
def test_w2_against_dense_grid_oracle(na, nb):
    rng = np.random.default_rng(na * 1000 + nb)
    xa = rng.standard_normal(na)
    xb = 0.5 + 1.3 * rng.standard_normal(nb)
    ours = wasserstein2_sq(EmpiricalDistribution(xa), EmpiricalDistribution(xb))
    assert ours == pytest.approx(brute_force_w2(xa, xb), rel=1e-4)


def test_w2_scipy_cross_check():
    from scipy.stats import wasserstein_distance

    # order-1 distance of the same quantile coupling as a sanity bound:
    # W1^2 <= W2^2 by Jensen
    rng = np.random.default_rng(4)
    xa = rng.standard_normal(400)
    xb = rng.standard_normal(300) * 2.0
    w2sq = wasserstein2_sq(EmpiricalDistribution(xa), EmpiricalDistribution(xb))
    w1 = wasserstein_distance(xa, xb)
    assert w1**2 <= w2sq + 1e-12


def test_empirical_distribution_validation():
    with pytest.raises(ValueError):
        EmpiricalDistribution(np.array([]))
    with pytest.raises(ValueError):
        EmpiricalDistribution(np.array([1.0, np.nan]))


def make_bundle(seed=0, npts=4, nrep=300):
    rng = np.random.default_rng(seed)
    pts = np.exp(rng.standard_normal((npts, 4)))
    refs = tuple(
        EmpiricalDistribution(-3.0 + 0.4 * rng.standard_normal(nrep))
        for _ in range(npts)
    )
    return ValidationBundle(pts, refs, pool_variance=0.4**2)


def test_bundle_validation():
    bundle = make_bundle()
    with pytest.raises(ValueError):
        ValidationBundle(bundle.points, bundle.references[:-1], 1.0)
    with pytest.raises(ValueError):
        ValidationBundle(bundle.points, bundle.references, 0.0)


def test_normalized_ws_error_perfect_sampler_is_small():
    bundle = make_bundle()

    def sampler(x, n, rng):
        return np.exp(-3.0 + 0.4 * rng.standard_normal(n))

    err = normalized_ws_error(sampler, bundle, rng=np.random.default_rng(1))
    assert err < 0.05


def test_normalized_ws_error_biased_sampler_scales():
    bundle = make_bundle(nrep=2000)

    def sampler(x, n, rng):
        # one pooled-std offset in the log-EDP
        return np.exp(-3.0 + 0.4 + 0.4 * rng.standard_normal(n))

    err = normalized_ws_error(sampler, bundle, rng=np.random.default_rng(2))
    # W2^2 = (0.4)^2, normalized by 0.4^2 -> about 1
    assert err == pytest.approx(1.0, abs=0.15)


def test_normalized_ws_error_rejects_small_n():
    bundle = make_bundle()
    with pytest.raises(ValueError):
        normalized_ws_error(lambda x, n, rng: np.ones(n), bundle, n_surrogate=10)


def test_fragility_rel_mse_basics():
    p_ref = np.array([0.1, 0.4, 0.8])
    assert fragility_rel_mse(p_ref, p_ref) == 0.0
    shifted = p_ref + 0.05
    expected = 0.05**2 / np.var(p_ref)
    assert fragility_rel_mse(p_ref, shifted) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ValueError):
        fragility_rel_mse(np.full(3, 0.5), np.full(3, 0.4))
    with pytest.raises(ValueError):
        fragility_rel_mse(p_ref, p_ref[:2])


def test_fragility_rel_mse_constant_predictor_unit_floor():
    # predicting the mean everywhere gives exactly 1 by definition
    rng = np.random.default_rng(5)
    p_ref = rng.uniform(size=50)
    p_model = np.full(50, p_ref.mean())
    assert fragility_rel_mse(p_ref, p_model) == pytest.approx(1.0, rel=1e-12)


def test_empirical_ccdf_counting_oracle():
    s = np.array([1.0, 2.0, 2.0, 3.0, 5.0])
    grid = np.array([0.5, 1.0, 2.0, 2.5, 3.0, 5.0, 6.0])
    out = empirical_ccdf(s, grid)
    ref = np.array([(s >= g).mean() for g in grid])
    assert np.allclose(out, ref, atol=1e-15)


def test_empirical_ccdf_monotone_and_limits():
    rng = np.random.default_rng(6)
    s = rng.exponential(size=1000)
    grid = np.linspace(0.0, 10.0, 101)
    out = empirical_ccdf(s, grid)
    assert np.all(np.diff(out) <= 1e-15)
    assert out[0] == 1.0
    with pytest.raises(ValueError):
        empirical_ccdf(np.array([]), grid)
