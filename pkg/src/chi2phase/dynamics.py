"""Direct integration of the momentum-space equations of motion.

The interaction only links the a mode at total wavenumber ``K`` to the
b-c pairs ``(k, K - k)``, so the problem splits into independent sectors,
one per ``K`` on the anti-diagonals of the ``(k_b, k_c)`` grid.  Each sector
is a small linear system integrated with classical RK4 in the interaction
frame: the free phases ``exp(-i k v t)`` are carried analytically and only
the coupling rotates.

Discrete amplitudes carry ``sqrt(dk)`` (a) and ``dk`` (b-c) so norms are
plain sums of squares; the coupling becomes ``eps sqrt(2 pi dk)``.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analytic import ComplexFidelity
from .errors import AccuracyError, DomainError, ResolutionError, StepSizeError
from .model import JointSpectrum, PhysicalConfig, config_to_dict

#: RK4 step as a fraction of the fastest rotation/coupling period scale
CFL = 0.05
NORM_TOL = 1e-6
A_DRAIN_TOL = 1e-4
#: pulses are considered apart once separated by this many (sigma0 + sigma)
PASS_WIDTHS = 8.0
MIN_PASS_WIDTHS = 6.0
MAX_HALVINGS = 3


@dataclass(frozen=True)
class KGrid:
    """Symmetric momentum grid ``k = -k_max .. k_max`` with ``n`` (odd) points."""

    k_max: float = 8.0
    n: int = 129

    def __post_init__(self):
        if not self.k_max > 0:
            raise DomainError("k_max must be > 0")
        if int(self.n) != self.n or self.n < 3 or self.n % 2 == 0:
            raise DomainError(f"n must be an odd integer >= 3 so k = 0 is a grid point, got {self.n}")

    @property
    def dk(self) -> float:
        return 2.0 * self.k_max / (self.n - 1)

    @property
    def k(self) -> np.ndarray:
        return np.linspace(-self.k_max, self.k_max, self.n)

    @property
    def n_sectors(self) -> int:
        return 2 * self.n - 1

    @property
    def total_k(self) -> np.ndarray:
        return -2.0 * self.k_max + self.dk * np.arange(self.n_sectors)

    def mask(self) -> np.ndarray:
        """``mask[s, i]`` is true when ``(k_i, K_s - k_i)`` lies on the grid."""
        s = np.arange(self.n_sectors)[:, None]
        j = s - np.arange(self.n)[None, :]
        return (j >= 0) & (j < self.n)

    def check_resolves(self, sigma0: float) -> None:
        if self.dk > 0.25 * sigma0 * (1 + 1e-12):
            raise ResolutionError(f"dk={self.dk:.4g} exceeds sigma0/4={sigma0 / 4:.4g}")
        if self.k_max < 6.0 / sigma0 * (1 - 1e-12):
            raise ResolutionError(f"k_max={self.k_max} below 6/sigma0={6 / sigma0:.4g}")

    @classmethod
    def default(cls, sigma0: float = 1.0) -> "KGrid":
        return cls(8.0 / sigma0, 129)


@dataclass
class SectorState:
    """One momentum sector: the a amplitude and its b-c anti-diagonal."""

    K: float
    a_amp: complex
    bc_amps: np.ndarray

    @property
    def norm(self) -> float:
        return abs(self.a_amp) ** 2 + float(np.sum(np.abs(self.bc_amps) ** 2))


@dataclass
class JointState:
    """All sectors of a discretised state, stored as padded arrays.

    ``a[s]`` is the a amplitude at ``K_s``; ``bc[s, i]`` the b-c amplitude at
    ``(k_i, K_s - k_i)`` (zero where that pair falls off the grid).
    Amplitudes are interaction-frame values at ``time``.
    """

    grid: KGrid
    a: np.ndarray
    bc: np.ndarray
    time: float = 0.0

    @property
    def sectors(self) -> list[SectorState]:
        mask = self.grid.mask()
        return [SectorState(float(K), complex(self.a[s]), self.bc[s][mask[s]])
                for s, K in enumerate(self.grid.total_k)]

    def sector(self, s: int) -> SectorState:
        m = self.grid.mask()[s]
        return SectorState(float(self.grid.total_k[s]), complex(self.a[s]), self.bc[s][m])

    def norm(self) -> float:
        return float(np.sum(np.abs(self.a) ** 2) + np.sum(np.abs(self.bc) ** 2))

    def a_population(self) -> float:
        return float(np.sum(np.abs(self.a) ** 2))

    def sector_norms(self) -> np.ndarray:
        return np.abs(self.a) ** 2 + np.sum(np.abs(self.bc) ** 2, axis=1)

    def bc_grid(self) -> np.ndarray:
        """Reassemble the ``n x n`` array of dk-weighted b-c amplitudes."""
        n = self.grid.n
        out = np.zeros((n, n), dtype=complex)
        i = np.arange(n)
        for s in range(self.grid.n_sectors):
            j = s - i
            ok = (j >= 0) & (j < n)
            out[i[ok], j[ok]] = self.bc[s, ok]
        return out

    def copy(self) -> "JointState":
        return JointState(self.grid, self.a.copy(), self.bc.copy(), self.time)


def decompose_sectors(spectrum: JointSpectrum, grid: KGrid, sigma0: Optional[float] = None) -> JointState:
    """Sample a two-photon spectrum on the grid and split it by total momentum.

    The a field starts empty.  Raises ResolutionError when the grid is too
    coarse for pulses of width ``sigma0`` (taken from the spectrum's config
    when not given).
    """
    if sigma0 is None and spectrum.config is not None:
        sigma0 = spectrum.config.sigma0
    if sigma0 is not None:
        grid.check_resolves(sigma0)
    values = spectrum.on_grid(grid.k) * grid.dk
    return state_from_grid(values, grid)


def state_from_grid(values: np.ndarray, grid: KGrid) -> JointState:
    n = grid.n
    bc = np.zeros((grid.n_sectors, n), dtype=complex)
    i = np.arange(n)
    for s in range(grid.n_sectors):
        j = s - i
        ok = (j >= 0) & (j < n)
        bc[s, ok] = values[i[ok], j[ok]]
    return JointState(grid, np.zeros(grid.n_sectors, dtype=complex), bc, 0.0)


# ---------------------------------------------------------------------------
# time integration
# ---------------------------------------------------------------------------

@dataclass
class Diagnostics:
    """Per-step record of a run."""

    times: np.ndarray
    norm: np.ndarray
    a_population: np.ndarray
    dt: float
    t_pass: float
    sector_norm_drift: float
    gamma: float = math.nan
    extra: dict = field(default_factory=dict)

    @property
    def norm_drift(self) -> float:
        return float(np.max(np.abs(self.norm - self.norm[0])))

    @property
    def peak_a_population(self) -> float:
        return float(np.max(self.a_population))


class _SectorBlock:
    """Coupling and detuning tables for a contiguous range of sectors."""

    def __init__(self, grid: KGrid, config: PhysicalConfig, rows: slice):
        v = config.velocities
        k = grid.k
        K = grid.total_k[rows]
        mask = grid.mask()[rows]
        kc = K[:, None] - k[None, :]
        kc_safe = np.where(mask, kc, 0.0)
        g = config.epsilon * math.sqrt(2.0 * math.pi * grid.dk)
        h_b = config.response.h_tilde(k)[None, :]
        h_c = config.response.h_tilde(kc_safe)
        self.coupling = np.where(mask, g * h_b * h_c, 0.0)
        self.detuning = np.where(mask, k[None, :] * v.v_ab + kc_safe * v.v_ac, 0.0)

    def rhs(self, t, a, bc):
        ph = np.exp(1j * t * self.detuning)
        cph = self.coupling * ph
        da = -1j * np.sum(cph * bc, axis=1)
        dbc = -1j * np.conj(cph) * a[:, None]
        return da, dbc


def _stiffness(grid: KGrid, config: PhysicalConfig) -> float:
    block = _SectorBlock(grid, config, slice(None))
    live = np.abs(block.coupling) > 1e-12 * max(np.abs(block.coupling).max(), 1e-300)
    det = float(np.max(np.abs(block.detuning[live]))) if np.any(live) else 0.0
    rabi = float(np.max(np.sqrt(np.sum(np.abs(block.coupling) ** 2, axis=1))))
    return max(det, rabi, 1e-12)


def pass_time(config: PhysicalConfig, widths: float = PASS_WIDTHS) -> float:
    """Time for the b pulse to move ``widths (sigma0 + sigma)`` past the c pulse."""
    return (config.z0 + widths * (config.sigma0 + config.sigma)) / config.velocities.v_bc


def _integrate_block(block: _SectorBlock, a, bc, t0, dt, n_steps, record):
    a = a.copy()
    bc = bc.copy()
    a_pop = np.empty(n_steps + 1)
    norms = np.empty(n_steps + 1)
    a_pop[0] = np.sum(np.abs(a) ** 2)
    norms[0] = a_pop[0] + np.sum(np.abs(bc) ** 2)
    h = dt
    for step in range(n_steps):
        t = t0 + step * h
        k1a, k1b = block.rhs(t, a, bc)
        k2a, k2b = block.rhs(t + 0.5 * h, a + 0.5 * h * k1a, bc + 0.5 * h * k1b)
        k3a, k3b = block.rhs(t + 0.5 * h, a + 0.5 * h * k2a, bc + 0.5 * h * k2b)
        k4a, k4b = block.rhs(t + h, a + h * k3a, bc + h * k3b)
        a += (h / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        bc += (h / 6.0) * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        if record:
            pa = np.sum(np.abs(a) ** 2)
            a_pop[step + 1] = pa
            norms[step + 1] = pa + np.sum(np.abs(bc) ** 2)
    return a, bc, a_pop, norms


def _run(state, config, t_stop, dt, workers):
    grid = state.grid
    n_steps = max(1, int(math.ceil((t_stop - state.time) / dt - 1e-9)))
    dt = (t_stop - state.time) / n_steps
    n_sec = grid.n_sectors
    n_blocks = max(1, min(workers, n_sec))
    bounds = np.linspace(0, n_sec, n_blocks + 1).astype(int)
    slices = [slice(bounds[b], bounds[b + 1]) for b in range(n_blocks)]

    def job(sl):
        block = _SectorBlock(grid, config, sl)
        return _integrate_block(block, state.a[sl], state.bc[sl], state.time, dt, n_steps, True)

    if n_blocks == 1:
        results = [job(slices[0])]
    else:
        with ThreadPoolExecutor(max_workers=n_blocks) as pool:
            results = list(pool.map(job, slices))
    a = np.concatenate([r[0] for r in results])
    bc = np.concatenate([r[1] for r in results])
    # fixed block order keeps the reduction reproducible
    a_pop = np.zeros(n_steps + 1)
    norms = np.zeros(n_steps + 1)
    for r in results:
        a_pop += r[2]
        norms += r[3]
    times = state.time + dt * np.arange(n_steps + 1)
    return JointState(grid, a, bc, t_stop), times, norms, a_pop, dt


def propagate(state: JointState, config: PhysicalConfig, t_stop: float, dt: Optional[float] = None,
              workers: int = 1) -> JointState:
    """Fixed-step RK4 from ``state.time`` to ``t_stop`` with no completeness checks.

    For looking at intermediate times (the pulses still overlapping) or
    at states that do not start as a b-c pair; use evolve() for full runs.
    """
    if not t_stop > state.time:
        raise DomainError("t_stop must be after state.time")
    if dt is None:
        dt = min(0.05, CFL / _stiffness(state.grid, config))
    return _run(state, config, t_stop, dt, workers)[0]


def evolve(state: JointState, config: PhysicalConfig, t_end: Optional[float] = None,
           dt_max: float = 0.05, *, drain: bool = True, max_drain_factor: float = 1.0,
           norm_tol: float = NORM_TOL, workers: int = 1) -> tuple[JointState, Diagnostics]:
    """Integrate every sector from ``state.time`` to ``t_end``.

    ``t_end`` defaults to the time at which the pulses are ``8 (sigma0 +
    sigma)`` apart again.  With ``drain`` the run is then extended (by at
    most ``max_drain_factor * t_end``) until the a population falls below
    1e-4.  The step is ``min(dt_max, CFL / omega)`` with ``omega`` the
    fastest detuning or Rabi rate on the grid; it is halved (up to three
    times) if the norm drifts by more than ``norm_tol``.
    """
    if t_end is None:
        t_end = pass_time(config)
    if t_end < pass_time(config, MIN_PASS_WIDTHS) * (1 - 1e-12):
        raise DomainError(f"t_end={t_end} ends before the pulses have passed "
                          f"(need >= {pass_time(config, MIN_PASS_WIDTHS):.4g})")
    grid = state.grid
    dt = min(dt_max, CFL / _stiffness(grid, config))
    norm0 = state.norm()
    norms0 = state.sector_norms()
    for attempt in range(MAX_HALVINGS + 1):
        cur, times, norms, a_pop, used_dt = _run(state, config, t_end, dt, workers)
        parts_t, parts_n, parts_a = [times], [norms], [a_pop]
        if drain:
            chunk = 0.25 * t_end
            limit = t_end + max_drain_factor * t_end
            while cur.a_population() >= A_DRAIN_TOL and cur.time < limit - 1e-12:
                stop = min(cur.time + chunk, limit)
                cur, t2, n2, a2, _ = _run(cur, config, stop, dt, workers)
                parts_t.append(t2[1:])
                parts_n.append(n2[1:])
                parts_a.append(a2[1:])
        times = np.concatenate(parts_t)
        norms = np.concatenate(parts_n)
        a_pop = np.concatenate(parts_a)
        drift = float(np.max(np.abs(norms - norm0)))
        if drift <= norm_tol:
            break
        dt *= 0.5
    else:
        raise StepSizeError(f"norm drift {drift:.3e} exceeds {norm_tol:g} even with dt={2 * dt:.3e}",
                            estimate=cur, residual=drift)
    sector_drift = float(np.max(np.abs(cur.sector_norms() - norms0)))
    gamma = 2.0 * math.pi * config.epsilon ** 2 * config.sigma / config.velocities.v_bc
    diag = Diagnostics(times, norms, a_pop, used_dt, pass_time(config, 0.0), sector_drift, gamma)
    return cur, diag


# ---------------------------------------------------------------------------
# read-outs
# ---------------------------------------------------------------------------

def fidelity_from_dynamics(initial: JointSpectrum, final_state: JointState) -> ComplexFidelity:
    """Discrete overlap of the interaction-frame output with the input.

    Divided by the discrete norm of the input, i.e. the overlap of the
    normalised grid states; without coupling it is exactly 1.
    """
    grid = final_state.grid
    start = state_from_grid(initial.on_grid(grid.k) * grid.dk, grid)
    x, y = start.bc, final_state.bc
    # split real and imaginary parts so that <x|x> is exactly real
    re = np.sum(x.real * y.real) + np.sum(x.imag * y.imag)
    im = np.sum(x.real * y.imag) - np.sum(x.imag * y.real)
    norm = np.sum(x.real * x.real) + np.sum(x.imag * x.imag)
    overlap = complex(re / norm, im / norm)
    residual_a = final_state.a_population()
    incomplete = residual_a >= A_DRAIN_TOL
    if incomplete:
        warnings.warn(f"a population {residual_a:.2e} remains: interaction not complete", RuntimeWarning)
    return ComplexFidelity(overlap, incomplete=incomplete)


def mode_phases(initial: JointSpectrum, final_state: JointState, threshold: float = 1e-3):
    """Per-mode phase ``arg(bc_out / bc_in)`` on modes with ``|bc_in| > threshold``.

    Returns ``(k_b, k_c, phase)`` arrays; amplitudes are the dk-weighted
    discrete values.
    """
    grid = final_state.grid
    k = grid.k
    bc_in = initial.on_grid(k) * grid.dk
    bc_out = final_state.bc_grid()
    sel = np.abs(bc_in) > threshold
    kb, kc = np.meshgrid(k, k, indexing="ij")
    return kb[sel], kc[sel], np.angle(bc_out[sel] / bc_in[sel])


def a_population_series(diag: Diagnostics, floor: float = 1e-13, min_efolds: float = 2.0) -> float:
    """Fit ``P_a(t) ~ exp(-rate t)`` to the tail after the pulses separate.

    The window starts at ``diag.t_pass``, when the pulse centres coincide
    (shifted by ``diag.extra['tail_offset']``, or replaced by
    ``diag.extra['tail_start']``), and keeps samples above ``floor``.  Returns the rate
    (to be compared with ``2 gamma``); ``nan`` when the population is
    identically zero.
    """
    p = diag.a_population
    if not np.any(p > 0):
        return math.nan
    start = diag.extra.get("tail_start")
    if start is None:
        start = diag.t_pass + diag.extra.get("tail_offset", 0.0)
    sel = (diag.times >= start) & (p > floor)
    if np.count_nonzero(sel) < 5:
        raise AccuracyError("not enough post-overlap samples to fit a decay rate")
    t = diag.times[sel]
    y = np.log(p[sel])
    if y[0] - y[-1] < min_efolds:
        raise AccuracyError(f"a population decays by only {y[0] - y[-1]:.2f} e-folds in the fit window")
    slope, _ = np.polyfit(t, y, 1)
    return float(-slope)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

_MAGIC = b"C2PSTAT1"
_HEADER = struct.Struct("<8sIId d32s")


def config_hash(config: PhysicalConfig) -> bytes:
    blob = json.dumps(config_to_dict(config), sort_keys=True).encode()
    return hashlib.sha256(blob).digest()


def save_checkpoint(path, state: JointState, config: PhysicalConfig) -> None:
    """Write a JointState to a little-endian binary file.

    Layout: 8-byte magic ``C2PSTAT1``, uint32 n, uint32 n_sectors,
    float64 k_max, float64 time, 32-byte SHA-256 of the configuration JSON,
    then ``n_sectors`` complex a amplitudes and the ``n_sectors x n`` padded
    b-c array (row-major), each complex as two float64 (re, im).
    """
    g = state.grid
    header = _HEADER.pack(_MAGIC, g.n, g.n_sectors, g.k_max, state.time, config_hash(config))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(state.a.astype("<c16").tobytes())
        fh.write(state.bc.astype("<c16").tobytes())


def load_checkpoint(path, config: Optional[PhysicalConfig] = None) -> JointState:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, n, n_sec, k_max, time, digest = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise DomainError(f"{path}: not a checkpoint file")
    if config is not None and digest != config_hash(config):
        raise DomainError(f"{path}: checkpoint was written for a different configuration")
    grid = KGrid(k_max, n)
    off = _HEADER.size
    a = np.frombuffer(raw, "<c16", n_sec, off).astype(complex)
    off += 16 * n_sec
    bc = np.frombuffer(raw, "<c16", n_sec * n, off).astype(complex).reshape(n_sec, n)
    return JointState(grid, a, bc, time)
