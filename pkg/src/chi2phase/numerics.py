"""Special functions and fixed-node quadrature.

Everything here is vectorised over numpy arrays and deterministic: the same
inputs always produce bit-identical outputs, independent of call order.
Scalar inputs give Python scalars back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special

from .errors import AccuracyError, DomainError, OverflowDomainError

__all__ = [
    "QuadratureSpec",
    "faddeeva",
    "erfc_complex",
    "erfi",
    "exp_scaled_erfi",
    "integrate_1d",
    "integrate_2d",
    "principal_value_1d",
    "gauss_legendre",
]

ERFI_MAX_ARG = 25.0
MAX_NODES = 2048
_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


@dataclass(frozen=True)
class QuadratureSpec:
    """Discretisation of an infinite-domain integral.

    The domain is truncated to ``[-truncation_radius, truncation_radius]``
    (per axis) and sampled with ``nodes_per_axis`` Gauss-Legendre nodes;
    the node count doubles until two successive estimates agree to
    ``target_rel_tol``.
    """

    truncation_radius: float = 8.0
    nodes_per_axis: int = 64
    target_rel_tol: float = 1e-10
    max_nodes: int = MAX_NODES

    def __post_init__(self):
        if not (self.truncation_radius > 0 and math.isfinite(self.truncation_radius)):
            raise DomainError(f"truncation_radius must be > 0, got {self.truncation_radius}")
        if int(self.nodes_per_axis) != self.nodes_per_axis or self.nodes_per_axis < 8:
            raise DomainError(f"nodes_per_axis must be an integer >= 8, got {self.nodes_per_axis}")
        if not 0 < self.target_rel_tol < 1:
            raise DomainError(f"target_rel_tol must lie in (0, 1), got {self.target_rel_tol}")
        if self.max_nodes < self.nodes_per_axis:
            raise DomainError("max_nodes must be >= nodes_per_axis")

    def with_radius(self, radius: float) -> "QuadratureSpec":
        return QuadratureSpec(radius, self.nodes_per_axis, self.target_rel_tol, self.max_nodes)


def _as_scalar(out, like):
    if np.ndim(like) == 0:
        return out.item()
    return out


def _check_finite(z, name="z"):
    if not np.all(np.isfinite(z)):
        raise DomainError(f"{name} must be finite")


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------

def faddeeva(z):
    """Faddeeva function w(z) = exp(-z**2) erfc(-i z).

    Backed by the Faddeeva package shipped with scipy (``scipy.special.wofz``),
    which switches between a Taylor/series region and a continued fraction
    for large ``|z|``.
    """
    z = np.asarray(z, dtype=complex)
    _check_finite(z)
    return _as_scalar(special.wofz(z), z)


def erfc_complex(z):
    """Complementary error function for complex argument.

    Uses ``erfc(z) = exp(-z**2) w(i z)`` in the right half plane and the
    reflection ``erfc(z) = 2 - erfc(-z)`` in the left one, so the only
    overflow left is the genuine growth for large ``|Im z|``.
    """
    z = np.asarray(z, dtype=complex)
    _check_finite(z)
    zr = np.where(z.real < 0, -z, z)
    with np.errstate(over="ignore", invalid="ignore"):
        val = np.exp(-zr * zr) * special.wofz(1j * zr)
    bad = ~np.isfinite(val)
    if np.any(bad):
        worst = z[bad].ravel()[0] if z.ndim else z.item()
        raise OverflowDomainError(
            f"erfc(z) overflows a double at z={worst!r}; "
            "use faddeeva() for the scaled value w(iz)")
    out = np.where(z.real < 0, 2.0 - val, val)
    return _as_scalar(out, z)


def erfi(x):
    """Imaginary error function erfi(x) = -i erf(i x) for real ``|x| <= 25``."""
    x = np.asarray(x, dtype=float)
    _check_finite(x, "x")
    if np.any(np.abs(x) > ERFI_MAX_ARG):
        raise OverflowDomainError(f"erfi argument exceeds {ERFI_MAX_ARG}: result is astronomically large")
    return _as_scalar(_TWO_OVER_SQRT_PI * np.exp(x * x) * special.dawsn(x), x)


def exp_scaled_erfi(x, log_scale):
    """Return ``exp(-log_scale) * erfi(x)`` without forming erfi(x).

    Valid for any real ``x`` as long as ``x**2 - log_scale`` is not huge;
    this is how the phase map stays finite far out in momentum space.
    """
    x = np.asarray(x, dtype=float)
    log_scale = np.asarray(log_scale, dtype=float)
    out = _TWO_OVER_SQRT_PI * np.exp(x * x - log_scale) * special.dawsn(x)
    return _as_scalar(out, np.broadcast_to(x, np.broadcast(x, log_scale).shape))


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _leggauss(n: int):
    # tridiagonal eigen-solver plus Newton polish: O(n^2), unlike numpy's companion-matrix leggauss
    x, w = special.roots_legendre(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n: int, a: float, b: float):
    """Nodes and weights of the n-point Gauss-Legendre rule on [a, b]."""
    x, w = _leggauss(int(n))
    half = 0.5 * (b - a)
    return half * x + 0.5 * (a + b), half * w


_ROW_BLOCK = 256


def _tensor_rule(f, n, radius):
    x, w = gauss_legendre(n, -radius, radius)
    total = 0.0 + 0.0j
    l1 = 0.0
    # row blocks bound memory; block order is fixed so sums are reproducible
    for start in range(0, n, _ROW_BLOCK):
        xs = x[start:start + _ROW_BLOCK]
        ws = w[start:start + _ROW_BLOCK]
        vals = np.asarray(f(xs[:, None], x[None, :]), dtype=complex)
        vals = np.broadcast_to(vals, (xs.size, n))
        if not np.all(np.isfinite(vals)):
            raise DomainError("integrand returned non-finite values")
        total += ws @ (vals @ w)
        l1 += ws @ (np.abs(vals) @ w)
    return complex(total), float(l1)


def integrate_1d(f: Callable, spec: QuadratureSpec = QuadratureSpec(), center: float = 0.0):
    """Gauss-Legendre integral of ``f`` over ``center ± R`` with node doubling."""
    a, b = center - spec.truncation_radius, center + spec.truncation_radius

    def rule(n):
        x, w = gauss_legendre(n, a, b)
        vals = np.asarray(f(x), dtype=complex)
        return complex(w @ vals), float(w @ np.abs(vals))

    n = int(spec.nodes_per_axis)
    prev, _ = rule(n)
    while True:
        n *= 2
        if n > spec.max_nodes:
            raise AccuracyError(f"integrate_1d did not converge with {n // 2} nodes",
                                estimate=prev, residual=residual)
        cur, l1 = rule(n)
        residual = abs(cur - prev)
        if residual <= spec.target_rel_tol * max(abs(cur), l1):
            return cur
        prev = cur


def integrate_2d(f: Callable, spec: QuadratureSpec = QuadratureSpec(), *, full_output=False):
    """Integrate ``f(x, y)`` over the plane with a tensor Gauss-Legendre rule.

    ``f`` must broadcast over a column of x values against a row of y
    values.  Node count doubles from ``spec.nodes_per_axis`` until two
    successive results agree to ``spec.target_rel_tol`` relative to the
    larger of ``|I|`` and ``∫∫|f|`` (the latter keeps odd integrands with
    a zero result from looping forever).

    Raises AccuracyError (carrying the best estimate) if the cap
    ``spec.max_nodes`` is reached first.
    """
    n = int(spec.nodes_per_axis)
    prev, _ = _tensor_rule(f, n, spec.truncation_radius)
    while True:
        n *= 2
        if n > spec.max_nodes:
            raise AccuracyError(
                f"integrate_2d did not converge with {n // 2} nodes per axis "
                f"(residual {residual:.3e})", estimate=prev, residual=residual)
        cur, l1 = _tensor_rule(f, n, spec.truncation_radius)
        residual = abs(cur - prev)
        if residual <= spec.target_rel_tol * max(abs(cur), l1):
            if full_output:
                return cur, {"nodes_per_axis": n, "residual": residual, "l1": l1}
            return cur
        prev = cur


def principal_value_1d(f: Callable, pole: float, spec: QuadratureSpec = QuadratureSpec(),
                       center: float | None = None):
    """Cauchy principal value of ``∫ f(k) / (k - pole) dk``.

    The window is ``[center - R, center + R]`` with ``R`` the truncation
    radius; ``center`` defaults to the pole, in which case the logarithmic
    end correction vanishes.  The subtracted integrand
    ``(f(k) - f(pole)) / (k - pole)`` is smooth and is integrated on
    ``[a, pole]`` and ``[pole, b]`` separately so no node lands on the pole.
    """
    pole = float(pole)
    if not math.isfinite(pole):
        raise DomainError("pole must be finite")
    c = pole if center is None else float(center)
    a, b = c - spec.truncation_radius, c + spec.truncation_radius
    if not a < pole < b:
        raise DomainError(f"pole {pole} lies outside the truncation window [{a}, {b}]")
    f_pole = complex(np.asarray(f(np.array([pole])), dtype=complex)[0])

    def rule(n):
        acc = 0.0 + 0.0j
        for lo, hi in ((a, pole), (pole, b)):
            x, w = gauss_legendre(n, lo, hi)
            vals = (np.asarray(f(x), dtype=complex) - f_pole) / (x - pole)
            acc += w @ vals
        return complex(acc)

    log_term = f_pole * math.log((b - pole) / (pole - a))
    n = int(spec.nodes_per_axis)
    prev = rule(n)
    scale = None
    while True:
        n *= 2
        if n > spec.max_nodes:
            raise AccuracyError(
                f"principal_value_1d did not converge with {n // 2} nodes",
                estimate=prev + log_term, residual=residual)
        cur = rule(n)
        residual = abs(cur - prev)
        if scale is None:
            x, w = gauss_legendre(n, a, b)
            scale = float(w @ np.abs(np.asarray(f(x), dtype=complex))) / max(b - a, 1.0)
        if residual <= spec.target_rel_tol * max(abs(cur + log_term), scale):
            out = cur + log_term
            return out.real if out.imag == 0.0 else out
        prev = cur
