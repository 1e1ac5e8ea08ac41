import numpy as np
import pytest
from scipy import stats

from chartensor import CpdModel, FitOptions, ScalingRecord, fit, marginal_model, pdf_eval, sample
from chartensor.errors import DegenerateComponentError
from chartensor.sampler import GridCdf, Sampler, sample_component, sample_conditional
from helpers import bump_density, planted_model


def signed_model():
    """Two classes with negative lobes whose mixture is a valid density."""
    K = 2
    k = np.arange(-K, K + 1)
    A = np.zeros((2 * K + 1, 2), dtype=complex)
    A[:, 0] = np.where(k == 0, 1, 0) + 0.7 * (np.abs(k) == 1)
    A[:, 1] = np.where(k == 0, 1, 0) - 0.7 * (np.abs(k) == 1) + 0.2 * (np.abs(k) == 2)
    return CpdModel(np.array([0.5, 0.5]), [A, A.copy()])


class TestGridCdf:
    def test_uniform(self):
        g = np.linspace(0, 1, 11)
        c = GridCdf.from_values(g, np.ones(11))
        np.testing.assert_allclose(c.cdf, g)
        np.testing.assert_allclose(c.invert(np.array([0.25, 0.5])), [0.25, 0.5])

    def test_clamps_and_renormalizes(self):
        g = np.linspace(0, 1, 101)
        c = GridCdf.from_values(g, np.cos(2 * np.pi * g))
        assert np.all(c.density >= 0) and c.cdf[-1] == 1
        assert np.all(np.diff(c.cdf) >= 0)

    def test_degenerate(self):
        with pytest.raises(DegenerateComponentError):
            GridCdf.from_values(np.linspace(0, 1, 5), -np.ones(5))


class TestComponents:
    def test_component_frequencies(self):
        rng = np.random.default_rng(0)
        h = sample_component([0.2, 0.8], rng, size=20000)
        assert abs(h.mean() - 0.8) < 0.02

    def test_conditional_matches_bump(self):
        model = planted_model()
        x = sample_conditional(model, 0, 1, np.random.default_rng(1), size=50000)
        edges = np.linspace(0, 1, 33)
        obs, _ = np.histogram(x, edges)
        g = np.linspace(0, 1, 4001)
        cdf = np.concatenate([[0], np.cumsum((bump_density(g[1:], 0.7) + bump_density(g[:-1], 0.7)) / 2 * np.diff(g))])
        exp = np.diff(np.interp(edges, g, cdf)) * x.size
        keep = exp > 5
        stat = np.sum((obs[keep] - exp[keep]) ** 2 / exp[keep])
        assert stats.chi2.sf(stat, keep.sum() - 1) > 0.01

    def test_truncated_gaussian_mean(self):
        # K=4 truncation of a Gaussian bump at 0.35; compare with the clamped quadrature mean
        K, mu, sd = 4, 0.35, 0.1
        k = np.arange(-K, K + 1)
        A = (np.exp(2j * np.pi * k * mu - 2 * (np.pi * k * sd) ** 2))[:, None]
        model = CpdModel(np.ones(1), [A])
        x = sample_conditional(model, 0, 0, np.random.default_rng(2), size=40000)
        g = (np.arange(4096) + 0.5) / 4096
        dens = np.maximum((np.exp(-2j * np.pi * np.outer(g, k)) @ A[:, 0]).real, 0)
        mean = np.sum(g * dens) / dens.sum()
        var = np.sum((g - mean) ** 2 * dens) / dens.sum()
        assert abs(x.mean() - mean) <= 3 * np.sqrt(var / x.size)

    def test_index_errors(self):
        with pytest.raises(IndexError):
            sample_conditional(planted_model(), 5, 0, np.random.default_rng(0))


class TestSample:
    def test_uniform_ks(self):
        out = sample(CpdModel.uniform(3, 4), 5000, seed=0, space="normalized")
        for n in range(3):
            assert stats.kstest(out.values[:, n], "uniform").pvalue > 0.01

    def test_raw_units(self):
        rec = ScalingRecord(np.array([-1.0]), np.array([0.5]))  # raw support [2, 4]
        out = sample(CpdModel.uniform(1, 2, rec), 2000, seed=1)
        assert out.values.min() >= 2 and out.values.max() <= 4

    def test_deterministic_and_worker_independent(self):
        model = planted_model()
        a = sample(model, 70000, seed=5)
        b = sample(model, 70000, seed=5, workers=3)
        np.testing.assert_array_equal(a.values, b.values)
        c = sample(model, 100, seed=6)
        assert not np.array_equal(a.values[:100], c.values)

    def test_marginals_chi_square(self):
        # 1e5 draws from the planted model (a fixed point of the fit) against its marginals
        model = planted_model()
        out = sample(model, 100000, seed=0, space="normalized").values
        edges = np.linspace(0, 1, 33)
        g = np.linspace(0, 1, 8193)
        for n in range(model.N):
            dens = pdf_eval(marginal_model(model, [n]), g[:, None])
            cdf = np.concatenate([[0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(g))])
            cdf /= cdf[-1]
            exp = np.diff(np.interp(edges, g, cdf)) * out.shape[0]
            obs, _ = np.histogram(out[:, n], edges)
            keep = exp > 5
            stat = np.sum((obs[keep] - exp[keep]) ** 2 / exp[keep])
            assert stats.chi2.sf(stat, keep.sum() - 1) > 0.01, n

    def test_sample_then_refit(self):
        truth = planted_model()
        draws = sample(truth, 50000, seed=2)
        model, _ = fit(draws, FitOptions(rank=2, harmonics=3, bounds=(0, 1), pad=0.0))
        tv = min(
            0.5 * np.abs(model.weights[list(p)] - truth.weights).sum() for p in [(0, 1), (1, 0)]
        )
        assert tv <= 0.05

    def test_exact_equals_latent_for_valid_components(self):
        model = planted_model()
        a = sample(model, 20000, seed=3, space="normalized").values
        b = sample(model, 20000, seed=4, space="normalized", method="latent").values
        for n in range(model.N):
            assert stats.ks_2samp(a[:, n], b[:, n]).pvalue > 0.01

    def test_signed_components_follow_joint_density(self):
        model = signed_model()
        g = np.linspace(0, 1, 401)
        # per-class densities dip below zero, the mixture does not
        s = Sampler(model)
        assert s.grid_values()[0].min() < 0
        P = np.array(np.meshgrid(g, g, indexing="ij")).reshape(2, -1).T
        assert pdf_eval(model, P).min() >= 0
        marg = pdf_eval(marginal_model(model, [0]), g[:, None])
        cdf = np.concatenate([[0], np.cumsum((marg[1:] + marg[:-1]) / 2 * np.diff(g))])
        cdf /= cdf[-1]
        target = stats.rv_histogram((np.diff(cdf), g))
        exact = sample(model, 20000, seed=7, space="normalized").values
        latent = sample(model, 20000, seed=7, space="normalized", method="latent").values
        assert stats.kstest(exact[:, 0], target.cdf).pvalue > 0.01
        assert stats.kstest(latent[:, 0], target.cdf).pvalue < 0.01

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            sample(CpdModel.uniform(1, 1), 0)
        with pytest.raises(ValueError):
            sample(CpdModel.uniform(1, 1), 5, method="other")
