import numpy as np
import pytest
from scipy import stats

from leansim import bayes
from leansim import regression as rg
from leansim.errors import DegeneratePosteriorError
from leansim.rng import RngStream, stream_index

T = np.arange(-14, 0, dtype=float)
X_NAT = 0.06 * np.sin(np.arange(14) * 1.7)
DESIGN = np.column_stack([np.ones(14), X_NAT, T])
THETA = np.array([0.2, 0.9, 0.01])


def make_fit(state="OH", scale=1.0, seed=0, sigma=0.1):
    y = DESIGN @ THETA + np.random.default_rng(seed).normal(0, sigma, 14)
    return rg.fit_state(DESIGN, scale * y, state)


@pytest.fixture(scope="module")
def fit():
    return make_fit()


@pytest.fixture(scope="module")
def draws(fit):
    return bayes.sample_posterior_arrays({"OH": fit}, seed=11, replications=np.arange(100_000))


def test_degenerate_fit_concentrates():
    fit = rg.StateFit("OH", 0.2, 0.9, 0.01, 1e-20, np.linalg.inv(DESIGN.T @ DESIGN), 14, np.zeros(14))
    arr = bayes.sample_posterior_arrays({"OH": fit}, 3, np.arange(1000))
    for i, field in enumerate(("alpha", "beta", "gamma")):
        assert np.abs(arr[field][:, 0] - fit.theta_hat[i]).max() < 1e-6


def test_zero_variance_is_an_error():
    fit = rg.StateFit("NV", 0.2, 0.9, 0.01, 0.0, np.eye(3), 14, np.zeros(14))
    with pytest.raises(DegeneratePosteriorError, match="NV") as info:
        bayes.sample_posterior(fit, RngStream(0))
    assert info.value.state == "NV"


def test_coefficient_means(fit, draws):
    cov = fit.sigma2_hat * 11 / 9 * fit.xtx_inv  # Student-t covariance
    for i, field in enumerate(("alpha", "beta", "gamma")):
        se = np.sqrt(cov[i, i] / 100_000)
        assert abs(draws[field].mean() - fit.theta_hat[i]) < 3 * se


def test_sigma2_mean(fit, draws):
    assert draws["sigma2"].mean() == pytest.approx(fit.sigma2_hat * 11 / 9, rel=0.02)


def test_sigma2_mean_by_definition(fit):
    brute = 11 * fit.sigma2_hat / np.random.default_rng(0).chisquare(11, 100_000)
    assert brute.mean() == pytest.approx(fit.sigma2_hat * 11 / 9, rel=0.02)


def test_alpha_excess_kurtosis(draws):
    assert stats.kurtosis(draws["alpha"][:, 0]) == pytest.approx(6 / 7, rel=0.3)


@pytest.mark.parametrize("i, field", list(enumerate(("alpha", "beta", "gamma"))))
def test_marginal_student_t(fit, draws, i, field):
    ref = stats.t(df=11, loc=fit.theta_hat[i], scale=np.sqrt(fit.sigma2_hat * fit.xtx_inv[i, i]))
    assert stats.kstest(draws[field][:10_000, 0], ref.cdf).pvalue > 0.001


def test_literal_variant_is_normal(fit):
    arr = bayes.sample_posterior_arrays({"OH": fit}, 5, np.arange(10_000), literal=True)
    ref = stats.norm(loc=fit.alpha_hat, scale=np.sqrt(fit.sigma2_hat * fit.xtx_inv[0, 0]))
    assert stats.kstest(arr["alpha"][:, 0], ref.cdf).pvalue > 0.001
    default = bayes.sample_posterior_arrays({"OH": fit}, 5, np.arange(10_000))
    # the sigma2 draws are shared, the coefficient draws are not
    assert np.array_equal(arr["sigma2"], default["sigma2"])
    assert not np.array_equal(arr["alpha"], default["alpha"])


@pytest.mark.parametrize("k", [0.5, 3.0])
def test_affine_equivariance(k):
    base = bayes.sample_posterior_arrays({"OH": make_fit()}, 1, np.arange(10_000))
    scaled = bayes.sample_posterior_arrays({"OH": make_fit(scale=k)}, 2, np.arange(10_000))
    for field in ("alpha", "beta", "gamma"):
        assert stats.ks_2samp(scaled[field][:, 0], k * base[field][:, 0]).pvalue > 0.001
    assert stats.ks_2samp(scaled["sigma2"][:, 0], k * k * base["sigma2"][:, 0]).pvalue > 0.001


def test_scalar_sampler_matches_batch_streams():
    fits = {"OH": make_fit("OH", seed=1), "AK": make_fit("AK", seed=2)}
    batch = bayes.sample_posterior_batch(fits, seed=9, count=4)
    for k, state in enumerate(sorted(fits)):
        for r in range(4):
            draw = bayes.sample_posterior(fits[state], RngStream(9, int(stream_index(r, k))))
            assert draw == batch[state][r]


def test_batch_count_zero_and_determinism():
    fits = {"OH": make_fit()}
    assert bayes.sample_posterior_batch(fits, 1, 0) == {"OH": []}
    assert bayes.sample_posterior_batch(fits, 1, 50) == bayes.sample_posterior_batch(fits, 1, 50)
    assert bayes.sample_posterior_batch(fits, 1, 50) != bayes.sample_posterior_batch(fits, 2, 50)


def test_batch_prefix_stable():
    fits = {"OH": make_fit()}
    assert bayes.sample_posterior_batch(fits, 1, 10)["OH"] == bayes.sample_posterior_batch(fits, 1, 30)["OH"][:10]


def test_draws_positive_and_finite(draws):
    assert np.all(draws["sigma2"] > 0)
    assert all(np.isfinite(v).all() for v in draws.values())


def test_small_sample_coverage():
    """Central 90% intervals cover the generating coefficients about 90% of the time."""
    rng = np.random.default_rng(5)
    fits = {}
    for i in range(1000):
        y = DESIGN @ THETA + rng.normal(0, 0.1, 14)
        fits[f"{i:04d}"] = rg.fit_state(DESIGN, y, f"{i:04d}")
    arr = bayes.sample_posterior_arrays(fits, 8, np.arange(400))
    for i, field in enumerate(("alpha", "beta", "gamma")):
        lo, hi = np.quantile(arr[field], [0.05, 0.95], axis=0)
        coverage = np.mean((lo <= THETA[i]) & (THETA[i] <= hi))
        assert coverage == pytest.approx(0.90, abs=0.04)


def test_write_draws(tmp_path):
    path = tmp_path / "posteriorDraws.csv"
    bayes.write_draws(path, bayes.sample_posterior_batch({"OH": make_fit()}, 1, 3))
    lines = path.read_text().splitlines()
    assert lines[0] == "state,replication,alpha,beta,gamma,sigma2"
    assert [ln.split(",")[:2] for ln in lines[1:]] == [["OH", "0"], ["OH", "1"], ["OH", "2"]]
