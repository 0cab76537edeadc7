"""Adiabatic elimination of the a field (strong-conversion regime).

When the a photon decays back into a b-c pair much faster than the
envelopes change, its amplitude follows the b-c source instantaneously
and the output pair state reduces to a simple multiplicative factor.
Valid for ``alpha tau << 1`` and ``tau << 1``; only Gaussian kernels.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .analytic import ComplexFidelity
from .errors import DomainError
from .model import GaussianResponse, PhysicalConfig, dimensionless_from_physical, initial_spectrum
from .numerics import QuadratureSpec, integrate_1d, integrate_2d

SQRT_2PI = math.sqrt(2.0 * math.pi)

#: strong damping needs gamma at least this many times the largest detuning
STRONG_DAMPING_MARGIN = 10.0


@dataclass(frozen=True)
class AdiabaticParams:
    gamma: float
    alpha_tau: float
    tau: float

    @property
    def valid(self) -> bool:
        return self.alpha_tau < 0.1 and self.tau < 0.2


def gamma_rate(config: PhysicalConfig) -> float:
    """Decay rate ``2 pi eps^2 sigma / v_bc`` of the a amplitude into b-c pairs."""
    return 2.0 * math.pi * config.epsilon ** 2 * config.sigma / config.velocities.v_bc


def adiabatic_params(config: PhysicalConfig) -> AdiabaticParams:
    p = dimensionless_from_physical(config)
    return AdiabaticParams(gamma_rate(config), p.alpha * p.tau, p.tau)


def _require_gaussian(config):
    if not isinstance(config.response, GaussianResponse):
        raise DomainError("the adiabatic solution is only available for Gaussian kernels")


def xi_a_adiabatic(k_a: float, t: float, config: PhysicalConfig, mode: str = "full",
                   spec: QuadratureSpec = QuadratureSpec(nodes_per_axis=128, target_rel_tol=1e-10,
                                                         max_nodes=8192)) -> complex:
    """Lab-frame a amplitude at wavenumber ``k_a`` and time ``t``.

    ``mode="full"`` keeps the Lorentzian denominator
    ``gamma + i (k_a v_ac - k v_bc)``; ``mode="strong_damping"`` replaces it
    by ``gamma`` and warns when ``gamma`` is not at least ten times the
    detunings over the spectrum's support.  The transient started at
    ``t = 0`` is dropped.
    """
    _require_gaussian(config)
    if mode not in ("full", "strong_damping"):
        raise DomainError(f"mode must be 'full' or 'strong_damping', got {mode!r}")
    v = config.velocities
    gamma = gamma_rate(config)
    if gamma == 0:
        return 0j
    h = config.response.h_tilde
    s0 = config.sigma0
    centre = 0.5 * k_a
    radius = 8.0 / s0

    def source(k):
        return h(k) * h(k_a - k) * np.exp(-1j * k * v.v_bc * t) * initial_spectrum(config, k, k_a - k)

    if mode == "full":
        def integrand(k):
            return source(k) / (gamma + 1j * (k_a * v.v_ac - k * v.v_bc))
        pref = -1j * config.epsilon * SQRT_2PI
    else:
        k_sup = centre + np.linspace(-4.0 / s0, 4.0 / s0, 33)
        worst = float(np.max(np.abs(k_a * v.v_ac - k_sup * v.v_bc)))
        if gamma < STRONG_DAMPING_MARGIN * worst:
            warnings.warn(f"strong-damping limit questionable: gamma={gamma:.3g} vs detuning {worst:.3g}",
                          RuntimeWarning, stacklevel=2)
        integrand = source
        pref = -1j * v.v_bc / (SQRT_2PI * config.epsilon * config.sigma)
    val = integrate_1d(integrand, spec.with_radius(radius), center=centre)
    return pref * np.exp(-1j * k_a * v.v_c * t) * val


def adiabatic_factor(k_b, k_c, sigma: float, exponent_sign: int = -1):
    """``1 - 2 exp(sign (k_b^2 + k_c^2) sigma^2)``.

    The physical factor uses ``sign = -1``: it is ``-(2 pi / sigma)
    |h(k_b)|^2 |h(k_c)|^2`` plus one and tends to -1 as ``sigma -> 0``.  The
    ``+1`` variant is kept only to show that it does not reproduce the
    exact phase map.
    """
    if exponent_sign not in (-1, 1):
        raise DomainError("exponent_sign must be -1 or +1")
    k_b = np.asarray(k_b, dtype=float)
    k_c = np.asarray(k_c, dtype=float)
    return 1.0 - 2.0 * np.exp(exponent_sign * (k_b * k_b + k_c * k_c) * sigma * sigma)


def final_bc_adiabatic(k_b, k_c, config: PhysicalConfig, exponent_sign: int = -1):
    """Interaction-frame output pair amplitude in the adiabatic limit.

    Without coupling (``epsilon = 0``) nothing happens and the input is returned.
    """
    _require_gaussian(config)
    if config.epsilon == 0:
        return initial_spectrum(config, k_b, k_c)
    return adiabatic_factor(k_b, k_c, config.sigma, exponent_sign) * initial_spectrum(config, k_b, k_c)


def overlap_adiabatic(config: PhysicalConfig, spec: QuadratureSpec = QuadratureSpec()) -> ComplexFidelity:
    """Overlap of the adiabatic output with the input, by 2-D quadrature."""
    _require_gaussian(config)
    if config.epsilon == 0:
        return ComplexFidelity(1.0 + 0.0j)
    s0 = config.sigma0

    def integrand(kb, kc):
        kb, kc = np.broadcast_arrays(kb / s0, kc / s0)
        dens = np.abs(initial_spectrum(config, kb, kc)) ** 2
        return dens * adiabatic_factor(kb, kc, config.sigma) / (s0 * s0)

    val, info = integrate_2d(integrand, spec, full_output=True)
    return ComplexFidelity(val, info["nodes_per_axis"], info["residual"])
