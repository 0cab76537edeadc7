import math
import warnings

import numpy as np
import pytest

from chi2phase.analytic import complex_fidelity_equal_ab
from chi2phase.approx import (adiabatic_factor, adiabatic_params, final_bc_adiabatic, gamma_rate,
                              overlap_adiabatic, xi_a_adiabatic)
from chi2phase.dynamics import KGrid, decompose_sectors, propagate
from chi2phase.errors import DomainError
from chi2phase.model import (DimensionlessParams, JointSpectrum, TabulatedResponse, initial_spectrum,
                             physical_from_dimensionless)
from chi2phase.numerics import integrate_2d


def canonical(alpha, tau, **kw):
    return physical_from_dimensionless(DimensionlessParams(alpha, tau), **kw)


def test_gamma_rate():
    assert gamma_rate(canonical(1.0, 0.1)) == pytest.approx(20 * math.pi, rel=1e-14)
    c = canonical(1.0, 0.1)
    c2 = c.replace(response=type(c.response)(0.2), z0=c.z0)
    assert gamma_rate(c2) == pytest.approx(2 * gamma_rate(c))


def test_adiabatic_params_validity():
    assert adiabatic_params(canonical(0.1, 0.1)).valid
    assert not adiabatic_params(canonical(10.0, 0.1)).valid
    assert not adiabatic_params(canonical(0.01, 0.5)).valid


def test_xi_a_before_overlap_is_negligible():
    c = canonical(0.1, 0.1, z0=11.0)
    assert abs(xi_a_adiabatic(0.0, 0.0, c)) < 1e-10


def test_full_and_strong_damping_agree():
    c = canonical(0.1, 0.1)
    t = c.z0 / c.velocities.v_bc
    for k_a in (0.0, 0.5, -1.0):
        full = xi_a_adiabatic(k_a, t, c, "full")
        strong = xi_a_adiabatic(k_a, t, c, "strong_damping")
        assert abs(full - strong) <= 0.05 * abs(full)


def test_strong_damping_is_the_large_gamma_limit():
    errors = []
    for alpha in (0.1, 0.05, 0.025):
        c = canonical(alpha, 0.1)
        t = c.z0 / c.velocities.v_bc
        full = xi_a_adiabatic(0.3, t, c, "full")
        errors.append(abs(full - xi_a_adiabatic(0.3, t, c, "strong_damping")) / abs(full))
    assert errors[1] <= 0.6 * errors[0]
    assert errors[2] <= 0.6 * errors[1]


def test_strong_damping_warns_outside_validity():
    c = canonical(100.0, 0.5)
    with pytest.warns(RuntimeWarning, match="strong-damping"):
        xi_a_adiabatic(0.0, c.z0, c, "strong_damping")


def test_bad_mode_and_kernel():
    c = canonical(0.1, 0.1)
    with pytest.raises(DomainError):
        xi_a_adiabatic(0.0, 1.0, c, "weak")
    tab = c.replace(response=TabulatedResponse.from_gaussian(0.1, 50.0), z0=c.z0)
    with pytest.raises(DomainError):
        final_bc_adiabatic(0.0, 0.0, tab)


def test_factor_limits():
    k = np.linspace(-3, 3, 7)
    for sigma in (1e-3, 1e-5):
        np.testing.assert_allclose(adiabatic_factor(k[:, None], k[None, :], sigma), -1.0, atol=5e-5)
    assert adiabatic_factor(0.0, 0.0, 0.4) == -1.0


def test_final_bc_no_coupling_is_identity():
    c = canonical(math.inf, 0.1)
    assert final_bc_adiabatic(0.3, -0.2, c) == initial_spectrum(c, 0.3, -0.2)
    assert overlap_adiabatic(c).overlap == 1


def test_overlap_closed_form():
    # ∫∫ |xi|^2 (1 - 2 exp(-sigma^2 k^2)) = 1 - 2 / (1 + tau^2)
    for tau in (0.05, 0.3, 1.0):
        c = canonical(0.01, tau)
        assert overlap_adiabatic(c).overlap.real == pytest.approx(1 - 2 / (1 + tau * tau), abs=1e-10)


def test_overlap_matches_exact_at_small_tau():
    tau = 0.05
    approx = overlap_adiabatic(canonical(1.0, tau)).overlap
    exact = complex_fidelity_equal_ab(DimensionlessParams(1.0, tau)).overlap
    assert abs(approx - exact) < 0.05


def test_printed_exponent_sign_is_unphysical():
    # with exp(+sigma^2 k^2) the factor exceeds 1 in modulus and the overlap leaves the unit disc;
    # the corrected sign stays much closer to the exact strong-coupling overlap
    tau = 0.3
    c = canonical(1e-4 / tau, tau)
    exact = complex_fidelity_equal_ab(DimensionlessParams(1e-4 / tau, tau)).overlap.real

    def overlap(sign):
        return integrate_2d(lambda kb, kc: np.abs(initial_spectrum(c, kb, kc)) ** 2
                            * adiabatic_factor(kb, kc, c.sigma, sign)).real

    minus, plus = overlap(-1), overlap(+1)
    assert abs(plus) > 1
    assert abs(minus) <= 1
    assert abs(plus - exact) > 4 * abs(minus - exact)
    with pytest.raises(DomainError):
        adiabatic_factor(0.0, 0.0, 0.1, 2)


@pytest.mark.slow
def test_xi_a_matches_dynamics():
    c = canonical(0.1, 0.1)
    grid = KGrid()
    t = c.z0 / c.velocities.v_bc
    state = propagate(decompose_sectors(JointSpectrum.gaussian(c), grid), c, t)
    for s in (grid.n - 1, grid.n + 3, grid.n - 9):
        K = grid.total_k[s]
        dyn = abs(state.a[s]) / math.sqrt(grid.dk)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            ref = abs(xi_a_adiabatic(K, t, c, "full"))
        assert dyn == pytest.approx(ref, rel=0.1), K
