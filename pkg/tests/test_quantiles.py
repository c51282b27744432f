from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from stochfreq.errors import (
    CrossingQuantiles,
    IngestError,
    LengthMismatch,
    MalformedRecord,
    NonMonotoneProportions,
    ProportionOutOfRange,
    UOutOfRange,
)
from stochfreq.quantiles import (
    QuantileSeries,
    inverse_cdf,
    load_quantile_series,
    parse_quantile_series,
    sample,
)

GAUSS_ALPHAS = np.round(np.arange(1, 100) / 100, 2)


def gaussian_series(mu: float = 0.0, sigma: float = 1.0) -> QuantileSeries:
    return QuantileSeries(tuple(GAUSS_ALPHAS), tuple(stats.norm.ppf(GAUSS_ALPHAS, mu, sigma)))


def two_knots() -> QuantileSeries:
    return parse_quantile_series({"proportions": [0.1, 0.9], "values": [0.2, 0.8], "horizon_id": "h1"})


class TestParse:
    def test_valid_series(self):
        s = parse_quantile_series({"proportions": [0.1, 0.5, 0.9], "values": [0.2, 0.5, 0.8], "horizon_id": "t"})
        assert s.proportions == (0.1, 0.5, 0.9)
        assert s.values == (0.2, 0.5, 0.8)
        assert s.horizon_id == "t"

    def test_non_monotone_proportions(self):
        with pytest.raises(NonMonotoneProportions):
            parse_quantile_series({"proportions": [0.5, 0.1], "values": [0.5, 0.2], "horizon_id": "t"})

    def test_crossing_quantiles_rejected_not_sorted(self):
        with pytest.raises(CrossingQuantiles):
            parse_quantile_series({"proportions": [0.1, 0.9], "values": [0.8, 0.2], "horizon_id": "t"})

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            parse_quantile_series({"proportions": [0.1, 0.5, 0.9], "values": [0.2, 0.8], "horizon_id": "t"})

    def test_single_knot_is_too_short(self):
        with pytest.raises(LengthMismatch):
            parse_quantile_series({"proportions": [0.5], "values": [0.5], "horizon_id": "t"})

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.5])
    def test_proportion_out_of_range(self, bad):
        with pytest.raises(ProportionOutOfRange):
            parse_quantile_series({"proportions": sorted([bad, 0.5]) if bad < 0.5 else [0.5, bad],
                                   "values": [0.2, 0.8], "horizon_id": "t"})

    def test_missing_key(self):
        with pytest.raises(MalformedRecord, match="values"):
            parse_quantile_series({"proportions": [0.1, 0.9], "horizon_id": "t"})

    def test_non_numeric_entry(self):
        with pytest.raises(MalformedRecord):
            parse_quantile_series({"proportions": [0.1, "x"], "values": [0.2, 0.8], "horizon_id": "t"})

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "q.json"
        path.write_text(json.dumps({"proportions": [0.1, 0.9], "values": [0.2, 0.8], "horizon_id": "h"}))
        assert load_quantile_series(path) == QuantileSeries((0.1, 0.9), (0.2, 0.8), "h")

    def test_load_invalid_json(self, tmp_path):
        path = tmp_path / "q.json"
        path.write_text("{not json")
        with pytest.raises(MalformedRecord):
            load_quantile_series(path)

    @settings(max_examples=200, deadline=None)
    @given(st.dictionaries(st.sampled_from(["proportions", "values", "horizon_id", "junk"]),
                           st.one_of(st.lists(st.one_of(st.floats(allow_nan=True), st.text(max_size=2)), max_size=5),
                                     st.text(max_size=3), st.integers())))
    def test_parse_is_total(self, raw):
        try:
            s = parse_quantile_series(raw)
        except IngestError:
            return
        assert len(s.proportions) == len(s.values) >= 2


class TestInverseCdf:
    def test_midpoint(self):
        assert inverse_cdf(two_knots(), 0.5) == pytest.approx(0.5, abs=1e-15)

    def test_exact_knot(self):
        assert inverse_cdf(two_knots(), 0.1) == pytest.approx(0.2, abs=1e-15)

    def test_gaussian_knots_against_ppf(self):
        series = gaussian_series()
        value = inverse_cdf(series, 0.75, lower=-10.0, upper=10.0)
        assert abs(value - stats.norm.ppf(0.75)) <= 0.01
        assert value == pytest.approx(0.674, abs=0.01)

    def test_tails_extrapolate_linearly(self):
        s = two_knots()
        assert inverse_cdf(s, 0.05) == pytest.approx(0.2 - 0.75 * 0.05)
        assert inverse_cdf(s, 0.95) == pytest.approx(0.8 + 0.75 * 0.05)

    def test_tails_clamped_to_physical_bounds(self):
        s = QuantileSeries((0.1, 0.9), (0.01, 0.99))
        assert inverse_cdf(s, 1e-9) == 0.0
        assert inverse_cdf(s, 1 - 1e-9) == 1.0
        assert inverse_cdf(s, 1 - 1e-9, upper=0.995) == 0.995

    @pytest.mark.parametrize("u", [0.0, 1.0, -0.2, 1.2, float("nan")])
    def test_u_out_of_range(self, u):
        with pytest.raises(UOutOfRange):
            inverse_cdf(two_knots(), u)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-1.0, 2.0), min_size=2, max_size=8),
           st.floats(0.0, 1.0), st.floats(0.0, 3.0))
    def test_non_decreasing_in_u(self, raw_values, lower, width):
        values = tuple(sorted(raw_values))
        props = tuple(np.linspace(0.05, 0.95, len(values)))
        s = QuantileSeries(props, values)
        u = np.linspace(1e-6, 1 - 1e-6, 2001)
        q = inverse_cdf(s, u, lower=lower, upper=lower + width)
        assert np.all(np.diff(q) >= 0.0)


class TestSample:
    def test_deterministic(self):
        s = two_knots()
        np.testing.assert_array_equal(sample(s, 5, seed=7), sample(s, 5, seed=7))

    def test_point_mass(self):
        s = QuantileSeries((0.1, 0.5, 0.9), (0.4, 0.4, 0.4))
        assert np.all(sample(s, 1000, seed=1) == 0.4)

    def test_mean_within_three_standard_errors(self):
        mu, sigma, n = 0.5, 0.1, 100_000
        x = sample(gaussian_series(mu, sigma), n, seed=3)
        assert abs(x.mean() - mu) <= 3 * sigma / np.sqrt(n)

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
    def test_ks_against_implied_piecewise_linear_cdf(self, seed):
        # implied CDF: linear interpolation of the knots inside [a_1, a_R]
        s = QuantileSeries((0.05, 0.3, 0.6, 0.95), (0.1, 0.3, 0.35, 0.9))
        n = 100_000
        x = np.sort(sample(s, n, seed=seed))
        inner = x[(x >= s.values[0]) & (x <= s.values[-1])]
        F = np.interp(inner, s.values, s.proportions)
        Fn_hi = (np.searchsorted(x, inner, side="right")) / n
        Fn_lo = (np.searchsorted(x, inner, side="left")) / n
        ks = max(np.max(Fn_hi - F), np.max(F - Fn_lo))
        assert ks <= 2 / np.sqrt(n)

    def test_count_must_be_positive(self):
        with pytest.raises(ValueError):
            sample(two_knots(), 0)
