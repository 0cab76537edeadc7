"""Asymptotic (t -> infinity) solution of the b-c collision.

The output two-photon state, in the interaction frame, is the input state
times a pure phase ``exp(2i theta(k_b, k_c))``.  This module evaluates
theta, the pieces it is built from, the overlap with the input state and
the order-of-magnitude heuristics for the conversion probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

from .errors import AccuracyError, ConfigurationError, ConsistencyError, DegeneracyError, DomainError
from .model import (DimensionlessParams, GaussianResponse, PhysicalConfig, ResponseFunction,
                    TabulatedResponse, Velocities, initial_spectrum)
from .numerics import QuadratureSpec, erfc_complex, exp_scaled_erfi, integrate_2d, principal_value_1d

SQRT2 = math.sqrt(2.0)
TWO_PI = 2.0 * math.pi

#: PV window half-width in units of the kernel width sigma
PV_WINDOW_WIDTHS = 12.0


@dataclass(frozen=True)
class ComplexFidelity:
    """Overlap <psi_free(t)|psi(t)> with its modulus squared and argument."""

    overlap: complex
    nodes_per_axis: int = 0
    residual: float = 0.0
    incomplete: bool = False

    @property
    def fidelity(self) -> float:
        return abs(self.overlap) ** 2

    @property
    def phase(self) -> float:
        return math.atan2(self.overlap.imag, self.overlap.real)


class LengthCondition(NamedTuple):
    gamma_l_over_va: float
    lower_bound: float


# ---------------------------------------------------------------------------
# I_p, I_1, I_2
# ---------------------------------------------------------------------------

def ip_gaussian(k_b, k_c, sigma: float):
    """Principal-value integral I_p for the Gaussian kernel (Hilbert transform of a Gaussian)."""
    if not sigma > 0:
        raise DegeneracyError("sigma must be > 0")
    k_b = np.asarray(k_b, dtype=float)
    k_c = np.asarray(k_c, dtype=float)
    x = sigma * (k_b - k_c) / SQRT2
    out = -sigma * exp_scaled_erfi(x, sigma * sigma * (k_b * k_b + k_c * k_c))
    return out


def _pv_window(response: ResponseFunction, total_k: float) -> float:
    radius = PV_WINDOW_WIDTHS / response.sigma_effective
    if isinstance(response, TabulatedResponse):
        radius = min(radius, response.k_limit - 0.5 * abs(total_k))
    return radius


def ip_numeric(k_b: float, k_c: float, response: ResponseFunction,
               spec: QuadratureSpec = QuadratureSpec(nodes_per_axis=64, target_rel_tol=1e-10)) -> float:
    """I_p by direct principal-value quadrature, for any kernel.

    The integrand is centred at ``(k_b + k_c)/2``; the window is centred
    there too, so the end-point log correction is exercised whenever
    ``k_b != k_c``.
    """
    total = float(k_b) + float(k_c)

    def numerator(k):
        return response.h_tilde(k) ** 2 * response.h_tilde(total - k) ** 2

    radius = _pv_window(response, total)
    if not abs(k_b - 0.5 * total) < radius:
        raise DomainError(f"pole k_b={k_b} outside the usable kernel range")
    return principal_value_1d(numerator, float(k_b), spec.with_radius(radius), center=0.5 * total)


def _ip(k_b, k_c, response: ResponseFunction):
    if isinstance(response, GaussianResponse):
        return ip_gaussian(k_b, k_c, response.sigma)
    out = np.vectorize(lambda b, c: ip_numeric(b, c, response), otypes=[float])(k_b, k_c)
    return out


def i2_general(k_b, k_c, response: ResponseFunction, velocities: Velocities):
    """``(pi/v_bc)|h(k_b)|^2|h(k_c)|^2 - (i/v_bc) I_p``."""
    v_bc = velocities.v_bc
    if v_bc == 0:
        raise DegeneracyError("v_b = v_c")
    g = response.h_tilde(k_b) ** 2 * response.h_tilde(k_c) ** 2
    out = (math.pi / v_bc) * g - 1j / v_bc * _ip(k_b, k_c, response)
    return complex(out) if np.ndim(out) == 0 else out


def i1_factorized(k_b, k_c, config: PhysicalConfig):
    """The source integral I_1 once the time integral collapses to a delta function."""
    h = config.response.h_tilde
    out = (TWO_PI / config.velocities.v_bc) * h(k_b) * h(k_c) * initial_spectrum(config, k_b, k_c)
    return out


# ---------------------------------------------------------------------------
# phase map and final state
# ---------------------------------------------------------------------------

def theta_phase(k_b, k_c, config: PhysicalConfig):
    """Interaction phase theta(k_b, k_c) in (0, pi).

    Evaluated as ``atan2(A, B)`` with ``cot(theta) = B / A``, where both
    ``A`` and ``B`` carry an overall ``exp(-sigma^2 (k_b^2 + k_c^2))`` so
    nothing overflows far from the origin.  For ``epsilon = 0`` this gives
    0 or pi and the output state equals the input.
    """
    v = config.velocities
    if v.v_bc == 0:
        raise DegeneracyError("v_b = v_c")
    sigma = config.sigma
    if not sigma > 0:
        raise DegeneracyError("sigma = 0")
    k_b = np.asarray(k_b, dtype=float)
    k_c = np.asarray(k_c, dtype=float)
    eps2 = config.epsilon ** 2
    detuning = (k_b * v.v_ab + k_c * v.v_ac) * v.v_bc
    resp = config.response
    if isinstance(resp, GaussianResponse):
        damp = np.exp(-sigma * sigma * (k_b * k_b + k_c * k_c))
        a = TWO_PI * eps2 * sigma * damp
        b = detuning - TWO_PI * eps2 * ip_gaussian(k_b, k_c, sigma)
    else:
        g = resp.h_tilde(k_b) ** 2 * resp.h_tilde(k_c) ** 2
        a = 2.0 * math.pi ** 2 * eps2 * g
        b = detuning - TWO_PI * eps2 * _ip(k_b, k_c, resp)
    out = np.arctan2(a, b)
    return out.item() if out.ndim == 0 else out


def phase_factor_general(k_b, k_c, config: PhysicalConfig):
    """Output/input amplitude ratio built directly from I_1 and I_2.

    ``1 - 2 pi eps^2 h*(k_b) h*(k_c) I_1 / ((i D + 2 pi eps^2 I_2) xi_0)``
    with ``D = k_b v_ab + k_c v_ac``; equals ``exp(2i theta)``.
    """
    v = config.velocities
    h = config.response.h_tilde
    eps2 = config.epsilon ** 2
    k_b = np.asarray(k_b, dtype=float)
    k_c = np.asarray(k_c, dtype=float)
    i1_over_xi = (TWO_PI / v.v_bc) * h(k_b) * h(k_c)
    den = 1j * (k_b * v.v_ab + k_c * v.v_ac) + TWO_PI * eps2 * i2_general(k_b, k_c, config.response, v)
    out = 1.0 - TWO_PI * eps2 * h(k_b) * h(k_c) * i1_over_xi / den
    return complex(out) if np.ndim(out) == 0 else out


def final_spectrum(config: PhysicalConfig, k_b, k_c):
    """Interaction-frame output amplitude ``xi_0 exp(2i theta)``.

    Without coupling theta is 0 or pi; the input is returned untouched so
    the identity holds exactly rather than to round-off.
    """
    if config.epsilon == 0:
        return initial_spectrum(config, k_b, k_c)
    return initial_spectrum(config, k_b, k_c) * np.exp(2j * np.asarray(theta_phase(k_b, k_c, config)))


# ---------------------------------------------------------------------------
# overlaps
# ---------------------------------------------------------------------------

def _ridge(kb, at, tau, ratio, radius):
    """Locate the near-pole of the fidelity integrand along k_c for each k_b.

    Where ``alpha tau`` is large the imaginary part of the denominator
    vanishes on a curve close to ``k_c = -ratio k_b`` while the real part
    there is only ``2 pi exp(-tau^2 r^2)``: a Lorentzian ridge of width
    ``delta``.  Returns the centre and width used to map the k_c axis.
    """
    c = 2.0 * TWO_PI / math.sqrt(math.pi)

    def f_and_df(kc):
        x = tau * (kb - kc) / SQRT2
        g = np.exp(-0.5 * t2 * (kb + kc) ** 2)
        d = special.dawsn(x)
        f = at * (ratio * kb + kc) + c * g * d
        df = at + c * g * (-t2 * (kb + kc) * d - (tau / SQRT2) * (1.0 - 2.0 * x * d))
        return f, df

    t2 = tau * tau
    kc = np.clip(-ratio * kb, -radius, radius)
    for _ in range(6):
        f, df = f_and_df(kc)
        step = np.where(np.abs(df) > 1e-300, f / np.where(df == 0, 1.0, df), 0.0)
        kc = np.clip(kc - step, -radius, radius)
    _, df = f_and_df(kc)
    re = TWO_PI * np.exp(-t2 * (kb * kb + kc * kc))
    delta = np.minimum(1.0, re / np.maximum(np.abs(df), 1e-300))
    return kc, delta


#: ``alpha tau`` above which the k_c axis is remapped around the ridge
RIDGE_MAPPING_THRESHOLD = 1.0


def _fidelity_integral(params: DimensionlessParams, spec: QuadratureSpec, ratio: float) -> ComplexFidelity:
    if math.isinf(params.alpha):
        return ComplexFidelity(1.0 + 0.0j)
    tau, alpha = params.tau, params.alpha
    at = alpha * tau
    t2 = tau * tau
    radius = spec.truncation_radius / math.sqrt(t2 + 1.0)

    def integrand(kb, kc):
        r2 = kb * kb + kc * kc
        lin = kc if ratio == 0.0 else kb * ratio + kc
        den = 1j * at * lin + TWO_PI * np.exp(-t2 * r2) * erfc_complex(-1j * tau * (kb - kc) / SQRT2)
        return np.exp(-(t2 + 1.0) * r2) / den

    if at < RIDGE_MAPPING_THRESHOLD:
        func = integrand
    else:
        # k_c = centre + delta sinh(y U / R): unit-scale in y across the ridge
        def func(kb, y):
            centre, delta = _ridge(kb, at, tau, ratio, radius)
            span = np.arcsinh((radius + np.abs(centre)) / delta)
            arg = y * span / radius
            kc = centre + delta * np.sinh(arg)
            return integrand(kb, kc) * delta * np.cosh(arg) * span / radius

    try:
        val, info = integrate_2d(func, spec.with_radius(radius), full_output=True)
    except AccuracyError as exc:
        raise AccuracyError(str(exc), estimate=1.0 - 4.0 * exc.estimate, residual=4.0 * exc.residual) from None
    return ComplexFidelity(1.0 - 4.0 * val, info["nodes_per_axis"], 4.0 * info["residual"])


def complex_fidelity_general(params: DimensionlessParams, spec: QuadratureSpec = QuadratureSpec()) -> ComplexFidelity:
    """Overlap of output and freely evolved input for arbitrary velocity ratios.

    Integrates over the scaled wavenumbers ``k' = k sigma0``; the
    truncation radius of ``spec`` is measured in ``sqrt(tau^2 + 1) k'``.
    """
    return _fidelity_integral(params, spec, params.vel_ratio_ab_ac)


def complex_fidelity_equal_ab(params: DimensionlessParams, spec: QuadratureSpec = QuadratureSpec()) -> ComplexFidelity:
    """Overlap for ``v_a = v_b``, where it is real; a sizeable imaginary part is an error."""
    if not params.equal_ab:
        raise DomainError("complex_fidelity_equal_ab needs v_a = v_b (vel_ratio_ab_ac = 0)")
    out = _fidelity_integral(params, spec, 0.0)
    if abs(out.overlap.imag) > 100.0 * spec.target_rel_tol:
        raise ConsistencyError(f"overlap should be real, got Im = {out.overlap.imag:.3e}",
                               estimate=out.overlap, residual=abs(out.overlap.imag))
    return out


def overlap_from_phase_map(config: PhysicalConfig, spec: QuadratureSpec = QuadratureSpec()) -> complex:
    """``∫∫ |xi_0|^2 exp(2i theta)`` by direct quadrature of the phase map.

    A second route to the overlap that never touches the erfc form.
    """
    s0 = config.sigma0

    def integrand(kb, kc):
        kb, kc = np.broadcast_arrays(kb / s0, kc / s0)
        dens = np.abs(initial_spectrum(config, kb, kc)) ** 2
        return dens * np.exp(2j * theta_phase(kb, kc, config)) / (s0 * s0)

    return integrate_2d(integrand, spec)


# ---------------------------------------------------------------------------
# order-of-magnitude heuristics
# ---------------------------------------------------------------------------

def success_probability(params: DimensionlessParams) -> float:
    """Conversion-probability scale ``1/(alpha tau)`` (unit proportionality constant)."""
    return 1.0 / (params.alpha * params.tau)


def bin_model_probability(config: PhysicalConfig) -> float:
    """Slice-counting estimate ``(eps t_slip)^2 N^2 / N'``.

    Splits each pulse into ``N = sigma0/sigma`` slices; the a pulse holds
    ``N' = N v_ac / v_bc`` of them and each collision lasts
    ``t_slip = sigma / v_bc``.
    """
    sigma, s0 = config.sigma, config.sigma0
    if not sigma < s0:
        raise DomainError("bin model needs sigma < sigma0")
    v = config.velocities
    n = s0 / sigma
    n_prime = n * v.v_ac / v.v_bc
    t_slip = sigma / v.v_bc
    return (config.epsilon * t_slip) ** 2 * n * n / n_prime


def medium_length_condition(config: PhysicalConfig) -> LengthCondition:
    """``gamma L / v_a`` and the lower bound it must exceed when ``L/v_b >= sigma0/v_bc``."""
    if config.medium_length is None:
        raise ConfigurationError("medium_length is required")
    v = config.velocities
    gamma = TWO_PI * config.epsilon ** 2 * config.sigma / v.v_bc
    eps2 = config.epsilon ** 2
    alpha_tau = v.v_ac * v.v_bc / (eps2 * config.sigma * config.sigma0) if eps2 else math.inf
    bound = (TWO_PI / alpha_tau) * (v.v_b / v.v_a) * (v.v_ac / v.v_bc)
    return LengthCondition(gamma * config.medium_length / v.v_a, bound)
