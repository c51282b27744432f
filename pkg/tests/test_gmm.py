from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from stochfreq.errors import DegenerateComponent, InvalidGmm, TooFewSamples
from stochfreq.gmm import (
    VARIANCE_FLOOR,
    GaussianComponent,
    Gmm,
    em_fit,
    gmm_cdf,
    gmm_pdf,
    kmeans_partition,
    log_likelihood,
    mixture_variance,
    moment_match,
)
from stochfreq.presets import BIMODAL_GMM, DESK_GMM


def draw(rng, weights, means, sds, n):
    comp = rng.choice(len(weights), size=n, p=weights)
    return rng.normal(np.asarray(means)[comp], np.asarray(sds)[comp])


def assert_monotone(trace, slack=1e-12):
    diffs = np.diff(trace)
    assert np.all(diffs >= -slack), f"log-likelihood decreased by {-diffs.min():.3e}"


gmm_strategy = st.lists(
    st.tuples(st.floats(0.05, 1.0), st.floats(-1.0, 1.0), st.floats(1e-4, 0.5)),
    min_size=1, max_size=5,
).map(lambda items: Gmm.from_arrays(
    np.array([w for w, _, _ in items]) / math.fsum(w for w, _, _ in items),
    [m for _, m, _ in items], [v for _, _, v in items],
))


class TestGmmType:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(InvalidGmm):
            Gmm.from_arrays([0.5, 0.4], [0, 1], [1, 1])

    def test_variance_floor(self):
        with pytest.raises(InvalidGmm):
            Gmm((GaussianComponent(1.0, 0.0, 1e-12),))

    def test_empty(self):
        with pytest.raises(InvalidGmm):
            Gmm(())

    def test_round_trip(self):
        assert Gmm.from_dict(DESK_GMM.to_dict()) == DESK_GMM

    def test_record_keys(self):
        rec = BIMODAL_GMM.to_dict()
        assert set(rec) == {"components"}
        assert set(rec["components"][0]) == {"weight", "mean", "variance"}

    def test_malformed_record(self):
        with pytest.raises(InvalidGmm):
            Gmm.from_dict({"components": [{"weight": 1.0, "mean": 0.0}]})

    def test_moment_match(self):
        g = moment_match(BIMODAL_GMM)
        assert g.n_components == 1
        assert g.components[0].mean == pytest.approx(0.5)
        assert g.components[0].variance == pytest.approx(0.002 + 0.09)


class TestDensity:
    def test_standard_normal_mode(self):
        g = Gmm((GaussianComponent(1.0, 0.0, 1.0),))
        assert gmm_pdf(g, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-14)
        assert gmm_pdf(g, 0.0) == pytest.approx(0.39894, abs=1e-5)

    def test_mirror_symmetry(self):
        g = Gmm.from_arrays([0.5, 0.5], [0.3, 0.7], [0.01, 0.01])
        d = np.linspace(0, 0.5, 11)
        np.testing.assert_allclose(gmm_pdf(g, 0.5 - d), gmm_pdf(g, 0.5 + d), rtol=1e-13)

    @pytest.mark.parametrize("model", [DESK_GMM, BIMODAL_GMM])
    def test_pdf_integrates_to_one(self, model):
        lo = float(np.min(model.means - 12 * np.sqrt(model.variances)))
        hi = float(np.max(model.means + 12 * np.sqrt(model.variances)))
        breaks = list(model.means)
        total, _ = integrate.quad(lambda x: gmm_pdf(model, x), lo, hi, points=breaks, limit=200)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_cdf_median_and_limits(self):
        g = Gmm((GaussianComponent(1.0, 0.0, 1.0),))
        assert gmm_cdf(g, 0.0) == pytest.approx(0.5, abs=1e-15)
        assert gmm_cdf(DESK_GMM, -1e6) == 0.0
        assert gmm_cdf(DESK_GMM, 1e6) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("model", [DESK_GMM, BIMODAL_GMM])
    def test_cdf_derivative_is_pdf(self, model):
        x = np.linspace(model.means.min() - 0.2, model.means.max() + 0.2, 100)
        h = 1e-6
        fd = (gmm_cdf(model, x + h) - gmm_cdf(model, x - h)) / (2 * h)
        np.testing.assert_allclose(fd, gmm_pdf(model, x), atol=1e-6)

    def test_against_scipy_norm(self):
        x = np.linspace(0.0, 1.0, 50)
        expected = sum(w * stats.norm.pdf(x, m, math.sqrt(v)) for w, m, v in
                       zip(DESK_GMM.weights, DESK_GMM.means, DESK_GMM.variances))
        np.testing.assert_allclose(gmm_pdf(DESK_GMM, x), expected, rtol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(gmm_strategy)
    def test_pdf_nonnegative_cdf_monotone(self, model):
        x = np.linspace(-5, 5, 501)
        assert np.all(gmm_pdf(model, x) >= 0.0)
        F = gmm_cdf(model, x)
        assert np.all(np.diff(F) >= 0.0)
        assert 0.0 <= F[0] and F[-1] <= 1.0

    @settings(max_examples=50, deadline=None)
    @given(gmm_strategy)
    def test_mixture_variance_by_quadrature(self, model):
        mu = model.mean()
        sd = np.sqrt(model.variances)
        lo, hi = float(np.min(model.means - 15 * sd)), float(np.max(model.means + 15 * sd))
        second, _ = integrate.quad(lambda x: (x - mu) ** 2 * gmm_pdf(model, x), lo, hi,
                                   points=list(model.means), limit=400, epsabs=1e-13)
        assert mixture_variance(model.weights, model.means, model.variances) == pytest.approx(second, abs=1e-8)


class TestKMeans:
    def test_separated_points(self):
        part = kmeans_partition([0, 0, 0, 10, 10, 10], 2, seed=0)
        np.testing.assert_array_equal(part.labels, [0, 0, 0, 1, 1, 1])
        np.testing.assert_array_equal(part.means, [0.0, 10.0])
        np.testing.assert_array_equal(part.weights, [0.5, 0.5])

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            kmeans_partition([0.1, 0.2, 0.3], 5)

    def test_three_mode_recovery(self, rng):
        x = draw(rng, [1 / 3] * 3, [0.2, 0.5, 0.8], [0.02] * 3, 30_000)
        part = kmeans_partition(x, 3, seed=1)
        np.testing.assert_allclose(part.means, [0.2, 0.5, 0.8], atol=0.05)

    def test_no_empty_class_with_duplicates(self):
        x = np.array([0.0] * 50 + [1.0, 1.0, 2.0])
        part = kmeans_partition(x, 4, seed=3)
        assert np.all(part.counts > 0)

    def test_deterministic(self, rng):
        x = rng.normal(size=500)
        a, b = kmeans_partition(x, 4, seed=9), kmeans_partition(x, 4, seed=9)
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(a.means, b.means)


class TestEm:
    def test_point_mass_hits_floor(self):
        model, report = em_fit(np.full(100, 0.37), n=1)
        c = model.components[0]
        assert c.mean == 0.37 and c.weight == 1.0 and c.variance == VARIANCE_FLOOR
        assert report.floor_resets >= 1

    def test_single_gaussian_recovery(self, rng):
        x = rng.normal(0.5, 0.1, 100_000)
        model, report = em_fit(x, n=1)
        c = model.components[0]
        assert abs(c.mean - 0.5) <= 0.005
        assert abs(c.variance - 0.01) <= 0.1 * 0.01
        assert report.converged

    @pytest.mark.parametrize("sd", [0.01, 0.1])
    def test_two_mode_recovery(self, rng, sd):
        x = draw(rng, [0.5, 0.5], [0.2, 0.8], [sd, sd], 100_000)
        model, report = em_fit(x, n=2, seed=4)
        np.testing.assert_allclose(model.weights, [0.5, 0.5], atol=0.02)
        np.testing.assert_allclose(np.sort(model.means), [0.2, 0.8], atol=0.01)
        assert report.floor_resets == 0
        assert_monotone(report.log_likelihood_trace)

    def test_three_mode_recovery(self, rng):
        x = draw(rng, [0.2, 0.5, 0.3], [0.2, 0.5, 0.8], [0.03, 0.05, 0.04], 100_000)
        model, report = em_fit(x, n=3, seed=2)
        order = np.argsort(model.means)
        np.testing.assert_allclose(model.weights[order], [0.2, 0.5, 0.3], atol=0.02)
        np.testing.assert_allclose(model.means[order], [0.2, 0.5, 0.8], atol=0.01)
        assert_monotone(report.log_likelihood_trace)

    @pytest.mark.parametrize("seed", range(5))
    def test_likelihood_non_decreasing_ten_components(self, seed):
        x = stats.beta(2, 5).rvs(5000, random_state=seed)
        model, report = em_fit(x, n=10, seed=seed, max_iter=200)
        if report.floor_resets == 0:
            assert_monotone(report.log_likelihood_trace)
        assert math.fsum(model.weights) == pytest.approx(1.0, abs=1e-12)

    def test_trace_matches_final_model(self, rng):
        x = draw(rng, [0.3, 0.7], [0.0, 1.0], [0.2, 0.3], 2000)
        model, report = em_fit(x, n=2)
        assert report.final_log_likelihood == report.log_likelihood_trace[-1]
        assert log_likelihood(model, x) == pytest.approx(report.final_log_likelihood, abs=1e-12)

    def test_bit_reproducible(self, rng):
        x = draw(rng, [0.3, 0.7], [0.0, 1.0], [0.2, 0.3], 3000)
        a, _ = em_fit(x, n=4, seed=5)
        b, _ = em_fit(x, n=4, seed=5)
        assert a == b

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            em_fit([0.1, 0.2], n=3)

    def test_degenerate_component_after_budget(self):
        x = np.array([0.0] * 30 + [1.0] * 30)
        with pytest.raises(DegenerateComponent):
            em_fit(x, n=3, max_floor_resets=0)

    def test_responsibility_snapshot(self, rng):
        x = rng.normal(size=200)
        _, report = em_fit(x, n=2, keep_responsibilities=True)
        assert report.responsibility_snapshot.shape == (2, 200)
        np.testing.assert_allclose(report.responsibility_snapshot.sum(axis=0), 1.0, atol=1e-12)
