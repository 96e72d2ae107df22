import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize, stats

from covertkit.channel import ChannelSpec, hypothesis_pair
from covertkit.detector import (
    DetectorReport,
    MonteCarloReport,
    energy_cdf_alt,
    energy_cdf_null,
    error_rates_closed,
    min_error_prob_tv,
    optimal_threshold,
    simulate_detector,
    worker_count,
)
from covertkit.distributions import GaussianSpec, SkewNormalSpec
from covertkit.numerics import DomainError


def _likelihood_crossing(Px, s):
    # oracle: y^2 where the N(0, s) and N(0, Px + s) densities are equal
    f = lambda y: stats.norm.logpdf(y, scale=math.sqrt(s)) - stats.norm.logpdf(y, scale=math.sqrt(Px + s))
    return optimize.brentq(f, 1e-9, 50 * math.sqrt(Px + s), xtol=1e-15) ** 2


@pytest.mark.parametrize("Px,s", [(1.0, 1.0), (4.0, 1.0), (1.0, 4.0), (0.01, 2.0)])
def test_threshold_is_likelihood_crossing(Px, s):
    assert optimal_threshold(Px, s) == pytest.approx(_likelihood_crossing(Px, s), rel=1e-10)


def test_threshold_examples():
    assert optimal_threshold(1.0, 1.0) == pytest.approx(2 * math.log(2), abs=1e-12)
    assert optimal_threshold(3.0, 6.0) == pytest.approx(3 * optimal_threshold(1.0, 2.0), rel=1e-14)
    assert optimal_threshold(1e-12, 2.0) / 2.0 == pytest.approx(1.0, abs=1e-9)


def test_domain_errors():
    with pytest.raises(DomainError):
        optimal_threshold(0.0, 1.0)
    with pytest.raises(DomainError):
        error_rates_closed(1.0, 0.0)
    with pytest.raises(DomainError):
        simulate_detector(1.0, 1.0, n=9_999)


def test_closed_rates_examples():
    r = error_rates_closed(1.0, 1.0)
    # quoted values are rounded to Monte Carlo resolution; the chi-square oracle below is exact
    assert (r.alpha, r.beta, r.xi) == pytest.approx((0.2390, 0.5947, 0.8337), abs=5e-4)
    assert r.xi == r.alpha + r.beta
    # oracle: chi-square tail probabilities
    phi = r.threshold
    assert r.alpha == pytest.approx(stats.chi2.sf(phi, 1), abs=1e-14)
    assert r.beta == pytest.approx(stats.chi2.cdf(phi / 2, 1), abs=1e-14)
    assert error_rates_closed(1e-10, 1.0).xi == pytest.approx(1.0, abs=1e-4)


def test_high_power_rates_match_monte_carlo():
    closed = error_rates_closed(100.0, 1.0)
    mc = simulate_detector(100.0, 1.0, n=1_000_000, seed=4)
    assert abs(mc.xi_hat - closed.xi) < 3 * mc.std_err
    assert closed.xi == pytest.approx(0.2009491580, abs=1e-9)


@pytest.mark.xfail(strict=True, reason="zero-mean signalling only changes the variance; xi* at Px/sigma_w2 = 100 is 0.201")
def test_high_power_near_certain_detection_claim():
    assert error_rates_closed(100.0, 1.0).xi < 0.05


@given(st.floats(0.01, 50), st.floats(1.01, 2.0), st.floats(0.1, 10))
def test_xi_monotone(Px, factor, s):
    assert error_rates_closed(Px * factor, s).xi < error_rates_closed(Px, s).xi
    assert error_rates_closed(Px, s * factor).xi > error_rates_closed(Px, s).xi
    assert 0 <= error_rates_closed(Px, s).xi <= 1


def test_tv_route():
    pair = hypothesis_pair(GaussianSpec(0, 1e-12), ChannelSpec())
    assert min_error_prob_tv(pair) == pytest.approx(1.0, abs=1e-6)
    pair = hypothesis_pair(GaussianSpec(0, 1.0), ChannelSpec())
    assert min_error_prob_tv(pair) == pytest.approx(error_rates_closed(1.0, 1.0).xi, abs=1e-6)
    skew = min_error_prob_tv(hypothesis_pair(SkewNormalSpec.from_power(1.0, 1.0), ChannelSpec()))
    assert 0 < skew < 1


def test_monte_carlo_agrees_with_closed_form():
    mc = simulate_detector(1.0, 1.0, n=2_000_000, seed=3)
    closed = error_rates_closed(1.0, 1.0)
    assert abs(mc.xi_hat - closed.xi) < 3 * mc.std_err
    assert abs(mc.alpha_hat - closed.alpha) < 4 * math.sqrt(closed.alpha * (1 - closed.alpha) / mc.n)
    a, b, n = mc.alpha_hat, mc.beta_hat, mc.n
    assert mc.std_err == pytest.approx(math.sqrt(a * (1 - a) / n + b * (1 - b) / n), rel=1e-15)


@pytest.mark.parametrize("Px,s", [(1.0, 1.0), (4.0, 1.0), (1.0, 4.0)])
def test_monte_carlo_unbiased_across_seeds(Px, s):
    xi = error_rates_closed(Px, s).xi
    z = [(lambda m: (m.xi_hat - xi) / m.std_err)(simulate_detector(Px, s, n=200_000, seed=k)) for k in range(30)]
    # mean of 30 standard normals has sd 0.18
    assert abs(np.mean(z)) < 0.6 and 0.5 < np.std(z) < 1.6


def test_monte_carlo_deterministic_and_worker_independent(monkeypatch):
    a = simulate_detector(2.0, 1.0, n=2_500_000, seed=9, workers=1)
    b = simulate_detector(2.0, 1.0, n=2_500_000, seed=9, workers=3)
    assert a == b
    assert simulate_detector(2.0, 1.0, n=50_000, seed=10) != simulate_detector(2.0, 1.0, n=50_000, seed=11)
    monkeypatch.setenv("COVERTKIT_THREADS", "2")
    assert worker_count(8) == 2
    monkeypatch.setenv("COVERTKIT_THREADS", "junk")
    assert worker_count(3) == 3


def test_energy_cdfs_match_samples():
    rng = np.random.default_rng(17)
    e0 = rng.standard_normal(10**6) ** 2
    e1 = (rng.standard_normal(10**6) * math.sqrt(2.0) + rng.standard_normal(10**6)) ** 2
    assert stats.kstest(e0, lambda e: energy_cdf_null(e, 1.0)).statistic < 0.002
    assert stats.kstest(e1, lambda e: energy_cdf_alt(e, 2.0, 1.0)).statistic < 0.002
    assert energy_cdf_null(-1.0, 1.0) == 0.0


def test_report_csv_rows():
    r = error_rates_closed(1.0, 1.0)
    assert DetectorReport.CSV_HEADER == ("threshold", "alpha", "beta", "xi")
    assert [float(v) for v in r.csv_row()] == [r.threshold, r.alpha, r.beta, r.xi]
    m = MonteCarloReport(0.2, 0.5, 0.7, 10_000, 1, 0.01)
    assert m.csv_row()[3:5] == ["10000", "1"]
