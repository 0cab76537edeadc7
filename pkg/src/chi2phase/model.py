"""Medium, pulse and velocity parameters, plus the (alpha, tau) scaling.

Canonical units used throughout sweeps: pulse width ``sigma0 = 1`` and
relative b-c velocity ``v_bc = 1``.  With those fixed, ``alpha``, ``tau``
and two velocity ratios determine everything else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError, DegeneracyError, DomainError

SQRT_PI = math.sqrt(math.pi)

#: initial b-c separation in units of (sigma0 + sigma) when not given
Z0_FACTOR = 8.0
#: smallest separation accepted, same units
Z0_MIN_FACTOR = 5.0


# ---------------------------------------------------------------------------
# response kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianResponse:
    """Gaussian nonlocal kernel of width ``sigma``.

    Position space ``h(z) = (pi sigma^3)^(-1/4) exp(-z^2 / 2 sigma^2)``; its
    unitary Fourier transform ``(sigma/pi)^(1/4) exp(-k^2 sigma^2 / 2)`` has
    unit L2 norm.
    """

    sigma: float

    def __post_init__(self):
        if self.sigma == 0:
            raise DegeneracyError("sigma = 0: a local medium cannot keep the phase map near pi/2")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise DomainError(f"nonlocality width sigma must be > 0, got {self.sigma}")

    @property
    def sigma_effective(self) -> float:
        return self.sigma

    def h_tilde(self, k):
        k = np.asarray(k, dtype=float)
        out = (self.sigma / math.pi) ** 0.25 * np.exp(-0.5 * (k * self.sigma) ** 2)
        return out.item() if out.ndim == 0 else out

    def h_position(self, z):
        z = np.asarray(z, dtype=float)
        out = (math.pi * self.sigma ** 3) ** -0.25 * np.exp(-0.5 * (z / self.sigma) ** 2)
        return out.item() if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class TabulatedResponse:
    """Kernel given by samples of its (real, even) Fourier transform.

    Samples are mirrored to ``-k`` and averaged where both signs were given,
    then interpolated with a cubic spline, so the interpolant is exactly
    even.  Evaluation is allowed for ``|k| <= max|k_samples|``.
    """

    k_samples: np.ndarray
    h_tilde_values: np.ndarray
    sigma_effective: float
    _spline: CubicSpline = field(init=False, repr=False)
    _k_limit: float = field(init=False, repr=False)

    def __post_init__(self):
        k = np.asarray(self.k_samples, dtype=float).ravel()
        v = np.asarray(self.h_tilde_values).ravel()
        if k.shape != v.shape or k.size < 4:
            raise DomainError("need at least 4 (k, h_tilde) samples of matching shape")
        if np.iscomplexobj(v):
            if np.any(np.abs(v.imag) > 1e-14 * max(1.0, np.abs(v).max())):
                raise DomainError("tabulated h_tilde must be real (h real and symmetric)")
            v = v.real
        if not (self.sigma_effective > 0):
            raise DomainError("sigma_effective must be > 0")
        ak = np.round(np.abs(k), 12)
        uniq, inv = np.unique(ak, return_inverse=True)
        sums = np.bincount(inv, weights=v)
        vals = sums / np.bincount(inv)
        if uniq[0] == 0.0:
            kk = np.concatenate([-uniq[:0:-1], uniq])
            vv = np.concatenate([vals[:0:-1], vals])
        else:
            kk = np.concatenate([-uniq[::-1], uniq])
            vv = np.concatenate([vals[::-1], vals])
        object.__setattr__(self, "k_samples", k)
        object.__setattr__(self, "h_tilde_values", v.astype(float))
        object.__setattr__(self, "_spline", CubicSpline(kk, vv, bc_type="not-a-knot"))
        object.__setattr__(self, "_k_limit", float(uniq[-1]))

    @property
    def k_limit(self) -> float:
        return self._k_limit

    def h_tilde(self, k):
        k = np.asarray(k, dtype=float)
        if np.any(np.abs(k) > self._k_limit * (1 + 1e-12)):
            raise DomainError(f"k outside tabulated range |k| <= {self._k_limit}")
        ak = np.abs(k)
        out = 0.5 * (self._spline(ak) + self._spline(-ak))
        return out.item() if out.ndim == 0 else out

    @classmethod
    def from_gaussian(cls, sigma: float, k_max: float, n: int = 801) -> "TabulatedResponse":
        k = np.linspace(-k_max, k_max, n)
        return cls(k, GaussianResponse(sigma).h_tilde(k), sigma)


ResponseFunction = Union[GaussianResponse, TabulatedResponse]


def h_tilde(response: ResponseFunction, k):
    """Fourier-space kernel value(s) at wavenumber ``k``."""
    return response.h_tilde(k)


# ---------------------------------------------------------------------------
# velocities and configurations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Velocities:
    v_a: float
    v_b: float
    v_c: float

    def __post_init__(self):
        for name in ("v_a", "v_b", "v_c"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if not self.v_b > self.v_c:
            raise DegeneracyError(
                f"need v_b > v_c so the b pulse catches the c pulse (v_b={self.v_b}, v_c={self.v_c})")

    @property
    def v_ab(self) -> float:
        return self.v_a - self.v_b

    @property
    def v_ac(self) -> float:
        return self.v_a - self.v_c

    @property
    def v_bc(self) -> float:
        return self.v_b - self.v_c

    @property
    def equal_ab(self) -> bool:
        return self.v_a == self.v_b


@dataclass(frozen=True)
class PhysicalConfig:
    """Complete physical description of one b-c collision.

    ``z0`` defaults to ``8 (sigma0 + sigma)`` which makes the initial
    pulse overlap negligible.
    """

    response: ResponseFunction
    velocities: Velocities
    epsilon: float
    sigma0: float
    z0: Optional[float] = None
    medium_length: Optional[float] = None

    def __post_init__(self):
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise DomainError(f"epsilon must be >= 0, got {self.epsilon}")
        if not (self.sigma0 > 0 and math.isfinite(self.sigma0)):
            raise DomainError(f"sigma0 must be > 0, got {self.sigma0}")
        width = self.sigma0 + self.sigma
        if self.z0 is None:
            object.__setattr__(self, "z0", Z0_FACTOR * width)
        elif not self.z0 >= Z0_MIN_FACTOR * width * (1 - 1e-12):
            raise DomainError(
                f"z0={self.z0} too small: pulses must start disjoint (z0 >= {Z0_MIN_FACTOR}(sigma0 + sigma))")
        if self.medium_length is not None and not self.medium_length > 0:
            raise DomainError("medium_length must be > 0")

    @property
    def sigma(self) -> float:
        return self.response.sigma_effective

    @property
    def is_gaussian(self) -> bool:
        return isinstance(self.response, GaussianResponse)

    def replace(self, **changes) -> "PhysicalConfig":
        fields = dict(response=self.response, velocities=self.velocities, epsilon=self.epsilon,
                      sigma0=self.sigma0, z0=self.z0, medium_length=self.medium_length)
        if "response" in changes or "sigma0" in changes:
            fields["z0"] = None
        fields.update(changes)
        return PhysicalConfig(**fields)


@dataclass(frozen=True)
class DimensionlessParams:
    """The (alpha, tau) coordinates plus the two velocity ratios.

    ``alpha = inf`` stands for the non-interacting limit ``epsilon = 0``.
    """

    alpha: float
    tau: float
    vel_ratio_ab_ac: float = 0.0
    vel_ratio_b_a: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0 or math.isnan(self.alpha):
            raise DomainError(f"alpha must be > 0, got {self.alpha}")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise DomainError(f"tau must be > 0, got {self.tau}")
        if not self.vel_ratio_ab_ac < 1:
            raise DomainError("v_ab/v_ac must be < 1 (v_bc > 0 and v_ac > 0)")

    @property
    def equal_ab(self) -> bool:
        return self.vel_ratio_ab_ac == 0.0


def dimensionless_from_physical(config: PhysicalConfig) -> DimensionlessParams:
    v = config.velocities
    if v.v_bc == 0:
        raise DegeneracyError("v_b = v_c: the pulses never pass through each other")
    if not v.v_ac > 0:
        raise DegeneracyError(f"v_ac = v_a - v_c must be > 0 for alpha > 0 (got {v.v_ac})")
    if v.v_a == 0:
        raise DegeneracyError("v_a = 0 leaves the ratio v_b/v_a undefined")
    sigma = config.sigma
    eps2 = config.epsilon ** 2
    alpha = math.inf if eps2 == 0 else v.v_ac * v.v_bc / (eps2 * sigma * sigma)
    return DimensionlessParams(alpha=alpha, tau=sigma / config.sigma0,
                               vel_ratio_ab_ac=v.v_ab / v.v_ac, vel_ratio_b_a=v.v_b / v.v_a)


def canonical_velocities(vel_ratio_ab_ac: float, vel_ratio_b_a: float) -> Velocities:
    """Velocities with ``v_bc = 1`` reproducing the given ratios.

    When ``v_a = v_b`` the ratios do not fix the common offset; ``v_c = 1``
    is used then.
    """
    r1, r2 = vel_ratio_ab_ac, vel_ratio_b_a
    if not r1 < 1:
        raise DomainError("v_ab/v_ac must be < 1")
    v_ab = r1 / (1.0 - r1)
    if r2 == 1.0:
        if v_ab != 0.0:
            raise DomainError("v_b/v_a = 1 forces v_ab = 0, inconsistent with v_ab/v_ac != 0")
        return Velocities(2.0, 2.0, 1.0)
    v_a = v_ab / (1.0 - r2)
    if v_a == 0.0:
        raise DomainError("ratios imply v_a = 0 so v_b/v_a is undefined")
    v_b = r2 * v_a
    return Velocities(v_a, v_b, v_b - 1.0)


def physical_from_dimensionless(params: DimensionlessParams, convention: str = "canonical",
                                z0: Optional[float] = None,
                                medium_length: Optional[float] = None) -> PhysicalConfig:
    """Invert the scaling in canonical units (sigma0 = 1, v_bc = 1)."""
    if convention != "canonical":
        raise ConfigurationError(f"unknown scaling convention {convention!r}")
    vel = canonical_velocities(params.vel_ratio_ab_ac, params.vel_ratio_b_a)
    sigma = params.tau
    eps = 0.0 if math.isinf(params.alpha) else math.sqrt(vel.v_ac * vel.v_bc / params.alpha) / sigma
    return PhysicalConfig(GaussianResponse(sigma), vel, eps, 1.0, z0=z0, medium_length=medium_length)


# ---------------------------------------------------------------------------
# two-photon spectra
# ---------------------------------------------------------------------------

def initial_spectrum(config: PhysicalConfig, k_b, k_c):
    """Factorised Gaussian two-photon amplitude; the b pulse is centred at -z0."""
    s0 = config.sigma0
    k_b = np.asarray(k_b, dtype=float)
    k_c = np.asarray(k_c, dtype=float)
    out = (s0 / SQRT_PI) * np.exp(1j * k_b * config.z0 - 0.5 * s0 * s0 * (k_b * k_b + k_c * k_c))
    return out.item() if out.ndim == 0 else out


class JointSpectrum:
    """A two-photon amplitude xi_bc(k_b, k_c), analytic or on a grid."""

    def __init__(self, amplitude: Callable, kind: str = "analytic", config: Optional[PhysicalConfig] = None):
        self._amplitude = amplitude
        self.kind = kind
        self.config = config

    def __call__(self, k_b, k_c):
        return self._amplitude(k_b, k_c)

    @classmethod
    def gaussian(cls, config: PhysicalConfig) -> "JointSpectrum":
        return cls(lambda kb, kc: initial_spectrum(config, kb, kc), "analytic-gaussian", config)

    def on_grid(self, k: np.ndarray) -> np.ndarray:
        return np.asarray(self(k[:, None], k[None, :]), dtype=complex)


# ---------------------------------------------------------------------------
# JSON configuration
# ---------------------------------------------------------------------------

_PHYSICAL_KEYS = {"sigma", "v_a", "v_b", "v_c", "epsilon", "sigma0", "z0", "medium_length"}
_DIMLESS_KEYS = {"alpha", "tau", "vel_ratio_ab_ac", "vel_ratio_b_a"}


def config_from_dict(d: dict) -> PhysicalConfig:
    """Build a configuration from either physical or dimensionless keys.

    Unknown keys are rejected.  Tabulated kernels use
    ``{"response": {"k": [...], "h_tilde": [...], "sigma_effective": s}}``.
    """
    d = dict(d)
    response = d.pop("response", None)
    unknown = set(d) - _PHYSICAL_KEYS - _DIMLESS_KEYS
    if unknown:
        raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
    if set(d) & _DIMLESS_KEYS and set(d) & (_PHYSICAL_KEYS - {"z0", "medium_length"}):
        raise ConfigurationError("mix of physical and dimensionless keys")
    if "alpha" in d or "tau" in d:
        try:
            params = DimensionlessParams(float(d["alpha"]), float(d["tau"]),
                                         float(d.get("vel_ratio_ab_ac", 0.0)),
                                         float(d.get("vel_ratio_b_a", 1.0)))
        except KeyError as exc:
            raise ConfigurationError(f"missing key {exc}") from None
        return physical_from_dimensionless(params, z0=d.get("z0"), medium_length=d.get("medium_length"))
    try:
        if response is not None:
            unknown = set(response) - {"k", "h_tilde", "sigma_effective"}
            if unknown:
                raise ConfigurationError(f"unknown response keys: {sorted(unknown)}")
            resp = TabulatedResponse(np.asarray(response["k"], float),
                                     np.asarray(response["h_tilde"], float),
                                     float(response["sigma_effective"]))
        else:
            resp = GaussianResponse(float(d["sigma"]))
        vel = Velocities(float(d["v_a"]), float(d["v_b"]), float(d["v_c"]))
        return PhysicalConfig(resp, vel, float(d["epsilon"]), float(d["sigma0"]),
                              z0=d.get("z0"), medium_length=d.get("medium_length"))
    except KeyError as exc:
        raise ConfigurationError(f"missing key {exc}") from None


def config_to_dict(config: PhysicalConfig) -> dict:
    v = config.velocities
    out = {"v_a": v.v_a, "v_b": v.v_b, "v_c": v.v_c, "epsilon": config.epsilon,
           "sigma0": config.sigma0, "z0": config.z0}
    if isinstance(config.response, GaussianResponse):
        out["sigma"] = config.response.sigma
    else:
        out["response"] = {"k": config.response.k_samples.tolist(),
                           "h_tilde": config.response.h_tilde_values.tolist(),
                           "sigma_effective": config.response.sigma_effective}
    if config.medium_length is not None:
        out["medium_length"] = config.medium_length
    return out
