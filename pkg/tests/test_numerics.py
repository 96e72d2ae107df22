import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from covertkit.numerics import (
    BracketError,
    DomainError,
    NonConvergenceError,
    QuadratureSpec,
    RootBracket,
    SeriesControl,
    erf,
    find_root,
    integrate,
    kummer_1f1,
    lower_incomplete_gamma_regularized,
    upper_incomplete_gamma_regularized,
)

mpmath.mp.dps = 40


def test_erf_matches_mpmath():
    for x in (-3.0, -0.5, 0.0, 1e-8, 0.3, 1.0, 2.5, 6.0):
        assert erf(x) == pytest.approx(float(mpmath.erf(x)), rel=1e-15, abs=1e-300)


def test_erf_vectorised_and_odd():
    x = np.linspace(-4, 4, 81)
    assert np.allclose(erf(-x), -erf(x), rtol=0, atol=1e-16)


@pytest.mark.parametrize("a", [0.5, 1.0, 2.5, 10.0])
@pytest.mark.parametrize("x", [0.0, 1e-6, 0.3, 1.0, 5.0, 40.0])
def test_incomplete_gamma_matches_mpmath(a, x):
    ref_p = float(mpmath.gammainc(a, 0, x, regularized=True))
    ref_q = float(mpmath.gammainc(a, x, mpmath.inf, regularized=True))
    assert lower_incomplete_gamma_regularized(a, x) == pytest.approx(ref_p, rel=1e-13, abs=1e-300)
    assert upper_incomplete_gamma_regularized(a, x) == pytest.approx(ref_q, rel=1e-12, abs=1e-300)


def test_half_order_gamma_is_erf():
    x = np.linspace(0, 9, 50)
    assert np.allclose(lower_incomplete_gamma_regularized(0.5, x), erf(np.sqrt(x)), rtol=1e-14, atol=1e-16)


@given(st.floats(0.05, 20), st.floats(0, 60))
def test_incomplete_gamma_complement(a, x):
    p = lower_incomplete_gamma_regularized(a, x)
    q = upper_incomplete_gamma_regularized(a, x)
    assert 0 <= p <= 1 and 0 <= q <= 1
    assert p + q == pytest.approx(1.0, abs=1e-14)


def test_incomplete_gamma_domain():
    with pytest.raises(DomainError):
        lower_incomplete_gamma_regularized(0.0, 1.0)
    with pytest.raises(DomainError):
        upper_incomplete_gamma_regularized(1.0, -0.1)


@pytest.mark.parametrize(
    "a,b,z",
    [
        (0.5, 1.5, -2.0),
        (1.5, 1.5, 3.0),
        (-3.0, 1.5, -7.0),
        (-10.0, 1.5, -40.0),
        (2.5, 1.5, 45.0),
        (12.5, 1.5, 35.0),
        (1.0, 2.0, -20.0),
        (0.3, 0.7, 10.0),
    ],
)
def test_kummer_matches_mpmath(a, b, z):
    ref = float(mpmath.hyp1f1(a, b, z))
    assert kummer_1f1(a, b, z) == pytest.approx(ref, rel=1e-12)


def test_kummer_transformation_agrees_with_direct():
    z = np.linspace(0, 25, 11)
    assert np.allclose(kummer_1f1(-4, 1.5, -z, method="direct"), kummer_1f1(-4, 1.5, -z, method="kummer"),
                       rtol=1e-11)


def test_kummer_terminating_polynomial_is_exact():
    # 1F1(-2; 3/2; x) = 1 - 4x/3 + 4x^2/15
    x = np.array([-3.0, 0.0, 0.7, 4.0])
    assert np.allclose(kummer_1f1(-2, 1.5, x), 1 - 4 * x / 3 + 4 * x**2 / 15, rtol=1e-15, atol=1e-15)


def test_kummer_elementary_case():
    assert kummer_1f1(1.0, 1.0, 2.0) == pytest.approx(math.exp(2.0), rel=1e-14)


def test_kummer_domain_and_budget():
    with pytest.raises(DomainError):
        kummer_1f1(1.0, -2.0, 0.5)
    with pytest.raises(DomainError):
        kummer_1f1(1.0, 2.0, 0.5, method="bogus")
    with pytest.raises(NonConvergenceError):
        kummer_1f1(0.5, 1.5, 30.0, ctrl=SeriesControl(max_terms=5), method="direct")


def test_quadrature_spec_validation():
    with pytest.raises(DomainError):
        QuadratureSpec(1.0, 0.0)
    with pytest.raises(DomainError):
        QuadratureSpec(0.0, 1.0, panels=3)
    with pytest.raises(DomainError):
        QuadratureSpec(0.0, 1.0, rel_tol=0.0)


def test_simpson_is_exact_on_cubics():
    assert integrate(lambda x: x**3 - 2 * x + 1, QuadratureSpec(-1.0, 2.0, panels=2)) == pytest.approx(3.75, abs=1e-14)


def test_integrate_gaussian_mass():
    val = integrate(lambda x: np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi), QuadratureSpec(-12, 12))
    assert val == pytest.approx(1.0, abs=1e-10)


def test_integrate_vector_valued():
    vals = integrate(lambda x: np.stack([np.sin(x), np.cos(x)], axis=1), QuadratureSpec(0.0, math.pi))
    assert np.allclose(vals, [2.0, 0.0], atol=1e-10)


def test_integrate_reports_nonconvergence():
    with pytest.raises(NonConvergenceError):
        integrate(lambda x: np.sin(1e4 * x) ** 2, QuadratureSpec(0.0, 1.0, rel_tol=1e-14), max_panels=64)


def test_find_root_and_bracket_errors():
    r = find_root(lambda x: x**3 - 2.0, RootBracket(0.0, 2.0, abs_tol=1e-14))
    assert r == pytest.approx(2 ** (1 / 3), abs=1e-13)
    assert find_root(lambda x: x, RootBracket(0.0, 1.0)) == 0.0
    with pytest.raises(BracketError):
        find_root(lambda x: x * x + 1, RootBracket(-1.0, 1.0))
    with pytest.raises(DomainError):
        RootBracket(1.0, 1.0)


@given(st.floats(0.01, 50.0))
def test_find_root_inverts_monotone_map(c):
    r = find_root(lambda x: math.log1p(x) - math.log1p(c), RootBracket(0.0, 100.0, abs_tol=1e-13))
    assert r == pytest.approx(c, rel=1e-10, abs=1e-12)
