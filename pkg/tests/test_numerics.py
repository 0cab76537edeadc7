import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from chi2phase.errors import AccuracyError, DomainError, OverflowDomainError
from chi2phase.numerics import (QuadratureSpec, erfc_complex, erfi, exp_scaled_erfi, faddeeva, integrate_1d,
                                integrate_2d, principal_value_1d)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# --- special functions -----------------------------------------------------

def test_faddeeva_origin():
    assert faddeeva(0) == 1 + 0j


def test_faddeeva_on_imaginary_axis_matches_scaled_erfc():
    ref = oracles.to_complex(oracles.faddeeva_series(1j))
    val = faddeeva(1j)
    assert abs(val.imag) < 1e-16
    assert rel(val, ref) < 1e-12
    assert val.real == pytest.approx(0.427584, abs=1e-6)


@pytest.mark.parametrize("z", [2 + 3j, 0.3 + 0.1j, -1.7 + 0.4j, 4 + 0.5j, 0.5 - 0.5j])
def test_faddeeva_series_oracle(z):
    assert rel(faddeeva(z), oracles.to_complex(oracles.faddeeva_series(z))) < 1e-12


@pytest.mark.parametrize("z", [2 + 3j, 10 + 1j, 25 + 5j, -20 + 10j, 1 + 29j])
def test_faddeeva_continued_fraction_oracle(z):
    assert rel(faddeeva(z), oracles.to_complex(oracles.faddeeva_cf(z))) < 1e-12


def test_faddeeva_reflection_symmetry():
    rng = np.random.default_rng(1)
    z = rng.uniform(-6, 6, 1000) + 1j * rng.uniform(-3, 6, 1000)
    w = faddeeva(z)
    np.testing.assert_allclose(faddeeva(-np.conj(z)), np.conj(w), rtol=1e-12, atol=0)


def test_faddeeva_rejects_non_finite():
    with pytest.raises(DomainError):
        faddeeva(complex(np.nan, 0))
    with pytest.raises(DomainError):
        faddeeva(np.array([1.0, np.inf]))


def test_erfc_basics():
    assert erfc_complex(0) == 1
    for x in (0.5, 1.0, 2.0):
        assert erfc_complex(x) + erfc_complex(-x) == pytest.approx(2, abs=1e-15)


@pytest.mark.parametrize("z", [1 + 1j, -0.5 + 2j, 3 - 1j, -2.5 - 0.5j, 0.1j])
def test_erfc_series_oracle(z):
    assert rel(erfc_complex(z), oracles.to_complex(oracles.erfc_series(z))) < 1e-10


def test_erfc_reflection_random():
    rng = np.random.default_rng(2)
    z = rng.uniform(-5, 5, 500) + 1j * rng.uniform(-4, 4, 500)
    np.testing.assert_allclose(erfc_complex(z) + erfc_complex(-z), 2.0, rtol=0, atol=1e-10 * 2)


def test_erfc_overflow_is_reported():
    with pytest.raises(OverflowDomainError, match="faddeeva"):
        erfc_complex(1 + 40j)


def test_erfi_values_and_oddness():
    assert erfi(0) == 0
    assert erfi(1.0) == pytest.approx(1.650425759, abs=1e-9)
    assert rel(erfi(1.0), float(oracles.erfi_series(1))) < 1e-13
    x = np.linspace(0.1, 5, 20)
    np.testing.assert_array_equal(erfi(-x), -erfi(x))


def test_erfi_overflow():
    assert math.isfinite(erfi(25.0))
    with pytest.raises(OverflowDomainError):
        erfi(25.5)


def test_exp_scaled_erfi_beyond_overflow():
    # erfi(40) overflows a double but erfi(40) exp(-1600) does not
    val = exp_scaled_erfi(40.0, 1600.0)
    assert val == pytest.approx(1 / (40 * math.sqrt(math.pi)), rel=1e-3)
    assert exp_scaled_erfi(1.0, 0.0) == pytest.approx(erfi(1.0), rel=1e-15)


# --- quadrature ------------------------------------------------------------

def test_quadrature_spec_validation():
    with pytest.raises(DomainError):
        QuadratureSpec(truncation_radius=0)
    with pytest.raises(DomainError):
        QuadratureSpec(nodes_per_axis=4)
    with pytest.raises(DomainError):
        QuadratureSpec(target_rel_tol=1.0)


def test_gaussian_integral():
    val = integrate_2d(lambda x, y: np.exp(-x * x - y * y))
    assert rel(val.real, math.pi) < 1e-10


def test_odd_integrand_is_zero():
    val = integrate_2d(lambda x, y: x * np.exp(-x * x - y * y))
    assert abs(val) < 1e-14


@pytest.mark.parametrize("p,q", [(0, 0), (1, 0), (2, 0), (1, 1), (2, 2), (4, 0), (0, 3), (3, 1), (2, 1)])
def test_gaussian_moments(p, q):
    val = integrate_2d(lambda x, y: x ** p * y ** q * np.exp(-x * x - y * y))
    assert abs(val - oracles.gaussian_moment(p, q)) <= 1e-9


def test_complex_integrand_against_refined_rule():
    def f(x, y):
        return np.exp(-x * x - y * y) / (1 + 1j * x)

    val = integrate_2d(f)
    # same rule with 4x the nodes, no refinement loop
    from chi2phase.numerics import gauss_legendre
    x, w = gauss_legendre(1024, -8, 8)
    ref = w @ f(x[:, None], x[None, :]) @ w
    assert abs(val - ref) < 1e-10
    # the y integral is sqrt(pi); the x integral is real by symmetry
    assert abs(val.imag) < 1e-14


def test_integrate_2d_nonconvergence_carries_estimate():
    spec = QuadratureSpec(nodes_per_axis=8, max_nodes=16, target_rel_tol=1e-14)
    with pytest.raises(AccuracyError) as info:
        integrate_2d(lambda x, y: np.exp(-x * x - y * y) * np.cos(10 * x), spec)
    assert info.value.estimate is not None and info.value.residual > 0


def test_integrate_2d_is_deterministic():
    def f(x, y):
        return np.exp(-x * x - 2 * y * y + 0.3j * x * y)

    assert integrate_2d(f) == integrate_2d(f)


def test_integrate_1d():
    assert rel(integrate_1d(lambda x: np.exp(-x * x)).real, math.sqrt(math.pi)) < 1e-12


def test_pv_odd_integrand():
    assert abs(principal_value_1d(lambda k: np.exp(-k * k), 0.0)) < 1e-10


@given(st.floats(0.2, 3.0), st.floats(-2.0, 2.0))
@settings(max_examples=30, deadline=None)
def test_pv_even_numerator_is_zero(width, shift):
    # any even numerator with the pole at its centre: pole-shift form
    val = principal_value_1d(lambda k: np.exp(-((k - shift) / width) ** 2), shift, center=shift)
    assert abs(val) < 1e-10


def test_pv_hilbert_transform_of_gaussian():
    # PV ∫ e^{-(k-1)^2}/k dk = 2 sqrt(pi) D(1), Dawson D(x) = sqrt(pi)/2 e^{-x^2} erfi(x)
    val = principal_value_1d(lambda k: np.exp(-(k - 1) ** 2), 0.0, center=1.0,
                             spec=QuadratureSpec(truncation_radius=12))
    assert rel(val, math.pi * math.exp(-1) * float(oracles.erfi_series(1))) < 1e-10


def test_pv_pole_shift_invariance():
    c = 0.7

    def f(k):
        return np.exp(-k * k) * (1 + k)

    a = principal_value_1d(lambda k: f(k + c), 0.0, center=0.0, spec=QuadratureSpec(truncation_radius=10))
    # u = k + c moves the pole to +c
    b = principal_value_1d(f, c, center=c, spec=QuadratureSpec(truncation_radius=10))
    assert abs(a - b) < 1e-10


def test_pv_pole_outside_window():
    with pytest.raises(DomainError):
        principal_value_1d(lambda k: np.exp(-k * k), 20.0, center=0.0)
