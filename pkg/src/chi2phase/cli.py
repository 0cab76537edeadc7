"""Command-line front end: sweeps over (alpha, tau), cross-validation runs
and special-function tables.

Output is CSV with a ``#`` comment header holding the fully resolved
configuration and its SHA-256, so a file can always be traced back to the
inputs that produced it.  With the same configuration the CSV is
byte-identical between runs; wall-clock timings are only written when
``--timing`` is given.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analytic import complex_fidelity_equal_ab, complex_fidelity_general
from .approx import adiabatic_params, overlap_adiabatic
from .dynamics import (KGrid, a_population_series, decompose_sectors, evolve, fidelity_from_dynamics,
                       save_checkpoint)
from .errors import AccuracyError, Chi2PhaseError, ConfigurationError, DomainError
from .model import (DimensionlessParams, JointSpectrum, canonical_velocities, config_to_dict,
                    physical_from_dimensionless)
from .numerics import QuadratureSpec, erfc_complex, erfi, faddeeva

COLUMNS = ("alpha", "tau", "method", "re_overlap", "im_overlap", "fidelity", "phase_rad",
           "peak_a_pop", "gamma_fit", "status", "runtime_s")
METHODS = ("analytic", "dynamics", "approx")

VELOCITY_PRESETS = {
    "equal_ab": (0.0, 1.0),
    # v_b = 1.1 v_c and v_a = 2 v_b
    "fig2": (1.1 / 1.2, 0.5),
}

#: quadrature used for sweeps; looser than the library default so that the
#: ridge-dominated corner (alpha ~ 1, tau ~ 1) converges in reasonable time
SWEEP_QUADRATURE = QuadratureSpec(target_rel_tol=1e-6, max_nodes=4096)

# acceptance tolerances reported by `validate`
TOL_ANALYTIC_DYNAMICS = 1e-2
TOL_APPROX = 0.05
TOL_NORM = 1e-6


# ---------------------------------------------------------------------------
# sweep description and result rows
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    alpha_values: tuple
    tau_values: tuple
    velocity_preset: str = "equal_ab"
    vel_ratios: tuple = (0.0, 1.0)
    method: str = "analytic"

    def __post_init__(self):
        if not self.alpha_values or not self.tau_values:
            raise ConfigurationError("alpha_values and tau_values must be non-empty")
        for name in ("alpha_values", "tau_values"):
            vals = getattr(self, name)
            if any(not (v > 0) for v in vals) or any(math.isnan(v) for v in vals):
                raise ConfigurationError(f"all {name} must be > 0")
        if self.method not in METHODS + ("all",):
            raise ConfigurationError(f"unknown method {self.method!r}")
        if self.velocity_preset not in tuple(VELOCITY_PRESETS) + ("custom",):
            raise ConfigurationError(f"unknown velocity preset {self.velocity_preset!r}")
        try:
            canonical_velocities(*self.vel_ratios)
        except DomainError as exc:
            raise ConfigurationError(f"velocity ratios {self.vel_ratios} are invalid: {exc}") from None

    @property
    def methods(self) -> tuple:
        return METHODS if self.method == "all" else (self.method,)

    def params(self, alpha: float, tau: float) -> DimensionlessParams:
        return DimensionlessParams(alpha, tau, *self.vel_ratios)


def log_grid(lo: float, hi: float, n: int) -> tuple:
    return tuple(float(x) for x in np.logspace(math.log10(lo), math.log10(hi), n))


def preset_sweep(name: str, method: str = "analytic") -> SweepSpec:
    """The 16 x 16 log grids alpha in [0.1, 100], tau in [0.01, 1]."""
    if name == "fig1":
        vp = "equal_ab"
    elif name == "fig2":
        vp = "fig2"
    else:
        raise ConfigurationError(f"unknown preset {name!r}")
    return SweepSpec(log_grid(0.1, 100.0, 16), log_grid(0.01, 1.0, 16), vp, VELOCITY_PRESETS[vp], method)


@dataclass
class ResultRow:
    alpha: float
    tau: float
    method: str
    re_overlap: float
    im_overlap: float
    fidelity: float
    phase_rad: float
    peak_a_pop: float = math.nan
    gamma_fit: float = math.nan
    status: str = "ok"
    runtime_s: float = math.nan

    @classmethod
    def from_overlap(cls, alpha, tau, method, overlap, **aux) -> "ResultRow":
        re, im = float(np.real(overlap)), float(np.imag(overlap))
        return cls(alpha, tau, method, re, im, re * re + im * im, math.atan2(im, re), **aux)

    @classmethod
    def failed(cls, alpha, tau, method, status) -> "ResultRow":
        nan = math.nan
        return cls(alpha, tau, method, nan, nan, nan, nan, status=status)

    @property
    def ok(self) -> bool:
        return self.status.startswith("ok")

    def check(self) -> None:
        """Assert the row invariants (NaN rows are exempt)."""
        if math.isnan(self.re_overlap):
            return
        if self.fidelity != self.re_overlap ** 2 + self.im_overlap ** 2:
            raise ValueError("fidelity != re^2 + im^2")
        if self.phase_rad != math.atan2(self.im_overlap, self.re_overlap):
            raise ValueError("phase != atan2(im, re)")

    def to_record(self) -> list:
        return [_fmt(getattr(self, c)) for c in COLUMNS]

    @classmethod
    def from_record(cls, rec: dict) -> "ResultRow":
        kw = {}
        for f in fields(cls):
            raw = rec[f.name]
            kw[f.name] = raw if f.type == "str" else float(raw)
        return cls(**kw)


def _fmt(x) -> str:
    # repr gives the shortest string that round-trips exactly
    return x if isinstance(x, str) else repr(float(x))


# ---------------------------------------------------------------------------
# point evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RunSettings:
    quadrature: QuadratureSpec = SWEEP_QUADRATURE
    grid: KGrid = field(default_factory=KGrid)
    dt_max: float = 0.05
    max_drain_factor: float = 1.0
    z0: Optional[float] = None


def _analytic(params, settings):
    if params.equal_ab:
        return complex_fidelity_equal_ab(params, settings.quadrature)
    return complex_fidelity_general(params, settings.quadrature)


def evaluate_point(params: DimensionlessParams, method: str, settings: RunSettings = RunSettings(),
                   timing: bool = False) -> ResultRow:
    """One (alpha, tau, method) cell.  Failures are caught and put in ``status``."""
    a, t = params.alpha, params.tau
    t0 = time.perf_counter()
    try:
        if method == "analytic":
            res = _analytic(params, settings)
            row = ResultRow.from_overlap(a, t, method, res.overlap)
        elif method == "approx":
            config = physical_from_dimensionless(params, z0=settings.z0)
            res = overlap_adiabatic(config, settings.quadrature)
            status = "ok" if math.isinf(a) or adiabatic_params(config).valid else "ok:outside_validity"
            row = ResultRow.from_overlap(a, t, method, res.overlap, status=status)
        elif method == "dynamics":
            row = _dynamics_row(params, settings)[0]
        else:
            raise ConfigurationError(f"unknown method {method!r}")
    except AccuracyError as exc:
        # keep the best estimate when it is an overlap value
        if isinstance(exc.estimate, (complex, float)):
            row = ResultRow.from_overlap(a, t, method, complex(exc.estimate), status="accuracy")
        else:
            row = ResultRow.failed(a, t, method, "accuracy")
    except Chi2PhaseError as exc:
        row = ResultRow.failed(a, t, method, f"error:{type(exc).__name__}")
    if timing:
        row.runtime_s = round(time.perf_counter() - t0, 6)
    return row


def _dynamics_row(params, settings):
    config = physical_from_dimensionless(params, z0=settings.z0)
    spectrum = JointSpectrum.gaussian(config)
    settings.grid.check_resolves(config.sigma0)
    state = decompose_sectors(spectrum, settings.grid)
    final, diag = evolve(state, config, dt_max=settings.dt_max, max_drain_factor=settings.max_drain_factor)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = fidelity_from_dynamics(spectrum, final)
    try:
        gamma_fit = 0.5 * a_population_series(diag)
    except AccuracyError:
        gamma_fit = math.nan
    status = "incomplete" if res.incomplete else "ok"
    row = ResultRow.from_overlap(params.alpha, params.tau, "dynamics", res.overlap,
                                 peak_a_pop=diag.peak_a_population, gamma_fit=gamma_fit, status=status)
    return row, final, diag, config


def run_sweep(spec: SweepSpec, settings: RunSettings = RunSettings(), threads: int = 1,
              timing: bool = False) -> list:
    """Evaluate every (alpha, tau, method); rows are alpha-major, tau-minor."""
    tasks = [(spec.params(a, t), m) for a in spec.alpha_values for t in spec.tau_values for m in spec.methods]
    if threads <= 1:
        return [evaluate_point(p, m, settings, timing) for p, m in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda pm: evaluate_point(pm[0], pm[1], settings, timing), tasks))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def resolved_config(spec: Optional[SweepSpec], settings: RunSettings, extra: Optional[dict] = None) -> dict:
    out = {
        "version": __version__,
        "quadrature": asdict(settings.quadrature),
        "grid": {"k_max": settings.grid.k_max, "n": settings.grid.n},
        "dynamics": {"dt_max": settings.dt_max, "max_drain_factor": settings.max_drain_factor,
                     "z0": settings.z0},
    }
    if spec is not None:
        out["sweep"] = {"alpha_values": list(spec.alpha_values), "tau_values": list(spec.tau_values),
                        "velocity_preset": spec.velocity_preset, "vel_ratios": list(spec.vel_ratios),
                        "method": spec.method}
    if extra:
        out.update(extra)
    return out


def config_digest(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def format_csv(rows: Sequence[ResultRow], resolved: dict) -> str:
    buf = io.StringIO()
    buf.write(f"# chi2phase {__version__}\n")
    buf.write(f"# config_sha256: {config_digest(resolved)}\n")
    for line in json.dumps(resolved, sort_keys=True, indent=1).splitlines():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(r.to_record())
    return buf.getvalue()


def parse_csv(text: str) -> list:
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return [ResultRow.from_record(rec) for rec in csv.DictReader(body)]


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _write_json_mirror(path: str, rows, resolved):
    payload = {"config": resolved, "config_sha256": config_digest(resolved),
               "rows": [{c: getattr(r, c) for c in COLUMNS} for r in rows]}
    with open(path, "w") as fh:
        # NaN is written as the bare token NaN, which Python's json reads back
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# validate and tables
# ---------------------------------------------------------------------------

def run_validate(params: DimensionlessParams, settings: RunSettings = RunSettings()) -> dict:
    """Analytic, dynamics and (for alpha tau <= 1) approx overlaps with pairwise checks."""
    report = {"alpha": params.alpha, "tau": params.tau,
              "vel_ratios": [params.vel_ratio_ab_ac, params.vel_ratio_b_a], "methods": {}, "checks": {}}
    overlaps = {}
    try:
        overlaps["analytic"] = _analytic(params, settings).overlap
    except Chi2PhaseError as exc:
        report["methods"]["analytic"] = {"error": f"{type(exc).__name__}: {exc}"}
    try:
        row, _, diag, _ = _dynamics_row(params, settings)
        overlaps["dynamics"] = complex(row.re_overlap, row.im_overlap)
        report["methods"]["dynamics"] = {"norm_drift": diag.norm_drift, "peak_a_pop": row.peak_a_pop,
                                         "dt": diag.dt, "status": row.status}
        report["checks"]["norm_drift"] = {"value": diag.norm_drift, "tol": TOL_NORM,
                                          "pass": diag.norm_drift < TOL_NORM}
    except Chi2PhaseError as exc:
        report["methods"]["dynamics"] = {"error": f"{type(exc).__name__}: {exc}"}
    if params.alpha * params.tau <= 1 or math.isinf(params.alpha):
        try:
            config = physical_from_dimensionless(params, z0=settings.z0)
            overlaps["approx"] = overlap_adiabatic(config, settings.quadrature).overlap
        except Chi2PhaseError as exc:
            report["methods"]["approx"] = {"error": f"{type(exc).__name__}: {exc}"}
    for name, ov in overlaps.items():
        report["methods"].setdefault(name, {}).update(re_overlap=ov.real, im_overlap=ov.imag)
    for x, y, tol in (("analytic", "dynamics", TOL_ANALYTIC_DYNAMICS), ("analytic", "approx", TOL_APPROX),
                      ("dynamics", "approx", TOL_APPROX)):
        if x in overlaps and y in overlaps:
            d = abs(overlaps[x] - overlaps[y])
            report["checks"][f"{x}-{y}"] = {"value": d, "tol": tol, "pass": d < tol}
    report["pass"] = bool(report["checks"]) and all(c["pass"] for c in report["checks"].values()) \
        and not any("error" in m for m in report["methods"].values())
    return report


def table_points() -> dict:
    """The documented 64-point grid: 24 for w, 20 for erfc, 20 for erfi."""
    w_pts = [complex(x, y) for x in (-3.0, -0.5, 0.0, 0.5, 1.5, 3.0) for y in (-0.5, 0.0, 0.5, 2.0)]
    erfc_pts = [complex(x, y) for x in (-2.0, -0.75, 0.0, 1.0, 2.5) for y in (-1.0, 0.0, 0.25, 1.5)]
    erfi_pts = [complex(x, 0.0) for x in np.round(np.linspace(-3.0, 3.0, 20), 12)]
    return {"faddeeva": w_pts, "erfc": erfc_pts, "erfi": erfi_pts}


def run_tables() -> list:
    """Rows ``(function, re_z, im_z, re_value, im_value)``."""
    funcs = {"faddeeva": faddeeva, "erfc": erfc_complex, "erfi": lambda z: erfi(z.real)}
    rows = []
    for name, pts in table_points().items():
        for z in pts:
            v = complex(funcs[name](z))
            rows.append((name, z.real, z.imag, v.real, v.imag))
    return rows


def format_tables(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("function", "re_z", "im_z", "re_value", "im_value"))
    for name, *vals in rows:
        w.writerow([name] + [_fmt(v) for v in vals])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# configuration files
# ---------------------------------------------------------------------------

_TOP_KEYS = {"sweep", "point", "grid", "quadrature", "dynamics"}
_SWEEP_KEYS = {"alpha_values", "tau_values", "velocity_preset", "vel_ratio_ab_ac", "vel_ratio_b_a", "method"}
_POINT_KEYS = {"alpha", "tau", "vel_ratio_ab_ac", "vel_ratio_b_a"}
_DYN_KEYS = {"dt_max", "max_drain_factor", "z0"}


def _reject_unknown(d: dict, allowed: set, where: str):
    if not isinstance(d, dict):
        raise ConfigurationError(f"{where} must be a JSON object")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigurationError(f"unknown keys in {where}: {sorted(unknown)}")


def _values(v, name):
    # either an explicit list or {"min": .., "max": .., "n": ..} (log-spaced)
    if isinstance(v, dict):
        _reject_unknown(v, {"min", "max", "n"}, name)
        return log_grid(float(v["min"]), float(v["max"]), int(v["n"]))
    return tuple(float(x) for x in v)


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        d = json.load(fh)
    _reject_unknown(d, _TOP_KEYS, "config")
    return d


def settings_from_config(d: dict) -> RunSettings:
    q = d.get("quadrature", {})
    _reject_unknown(q, {f.name for f in fields(QuadratureSpec)}, "quadrature")
    g = d.get("grid", {})
    _reject_unknown(g, {"k_max", "n"}, "grid")
    dyn = d.get("dynamics", {})
    _reject_unknown(dyn, _DYN_KEYS, "dynamics")
    try:
        quad = QuadratureSpec(**{**asdict(SWEEP_QUADRATURE), **q})
        grid = KGrid(**g)
    except (DomainError, TypeError) as exc:
        raise ConfigurationError(str(exc)) from None
    return RunSettings(quad, grid, float(dyn.get("dt_max", 0.05)), float(dyn.get("max_drain_factor", 1.0)),
                       dyn.get("z0"))


def sweep_from_config(d: dict, preset: Optional[str], method: Optional[str]) -> SweepSpec:
    if preset is not None:
        base = preset_sweep(preset)
    else:
        base = preset_sweep("fig1")
    s = d.get("sweep", {})
    _reject_unknown(s, _SWEEP_KEYS, "sweep")
    alphas = _values(s["alpha_values"], "alpha_values") if "alpha_values" in s else base.alpha_values
    taus = _values(s["tau_values"], "tau_values") if "tau_values" in s else base.tau_values
    vp = s.get("velocity_preset", base.velocity_preset)
    if "vel_ratio_ab_ac" in s or "vel_ratio_b_a" in s:
        vp = "custom"
        ratios = (float(s.get("vel_ratio_ab_ac", 0.0)), float(s.get("vel_ratio_b_a", 1.0)))
    elif vp in VELOCITY_PRESETS:
        ratios = VELOCITY_PRESETS[vp]
    else:
        raise ConfigurationError(f"velocity preset {vp!r} needs explicit ratios")
    return SweepSpec(alphas, taus, vp, ratios, method or s.get("method", base.method))


def point_from_args(d: dict, args) -> DimensionlessParams:
    p = dict(d.get("point", {}))
    _reject_unknown(p, _POINT_KEYS, "point")
    if args.alpha is not None:
        p["alpha"] = args.alpha
    if args.tau is not None:
        p["tau"] = args.tau
    if "alpha" not in p or "tau" not in p:
        raise ConfigurationError("a point needs alpha and tau (--alpha/--tau or config 'point')")
    r1, r2 = VELOCITY_PRESETS["fig2" if args.preset == "fig2" else "equal_ab"]
    return DimensionlessParams(float(p["alpha"]), float(p["tau"]),
                               float(p.get("vel_ratio_ab_ac", r1)), float(p.get("vel_ratio_b_a", r2)))


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chi2phase", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, point=False):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--preset", choices=("fig1", "fig2"), help="pinned grid / velocity preset")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        if point:
            p.add_argument("--alpha", type=float)
            p.add_argument("--tau", type=float)

    p = sub.add_parser("sweep", help="evaluate overlaps on an (alpha, tau) grid")
    common(p)
    p.add_argument("--method", choices=METHODS + ("all",))
    p.add_argument("--json", dest="json_out", help="also write a JSON mirror here")
    p.add_argument("--timing", action="store_true", help="record wall-clock runtimes (breaks byte-identity)")

    p = sub.add_parser("validate", help="three-way comparison at one point")
    common(p, point=True)

    p = sub.add_parser("tables", help="special-function test vectors")
    p.add_argument("--out")

    p = sub.add_parser("dynamics", help="direct time integration at one point")
    common(p, point=True)
    p.add_argument("--checkpoint", help="save the final state here")
    p.add_argument("--timing", action="store_true")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "tables":
            _emit(format_tables(run_tables()), args.out)
            return 0
        cfg = load_config(args.config)
        settings = settings_from_config(cfg)
        if args.command == "sweep":
            spec = sweep_from_config(cfg, args.preset, args.method)
            rows = run_sweep(spec, settings, args.threads, args.timing)
            resolved = resolved_config(spec, settings)
            _emit(format_csv(rows, resolved), args.out)
            if args.json_out:
                _write_json_mirror(args.json_out, rows, resolved)
            return 0 if all(r.ok for r in rows) else 2
        params = point_from_args(cfg, args)
        if args.command == "validate":
            report = run_validate(params, settings)
            _emit(json.dumps(report, indent=1, sort_keys=True, default=str) + "\n", args.out)
            return 0 if report["pass"] else 2
        # dynamics
        t0 = time.perf_counter()
        row, final, diag, config = _dynamics_row(params, settings)
        if args.timing:
            row.runtime_s = round(time.perf_counter() - t0, 6)
        extra = {"point": {"alpha": params.alpha, "tau": params.tau,
                           "vel_ratio_ab_ac": params.vel_ratio_ab_ac, "vel_ratio_b_a": params.vel_ratio_b_a},
                 "physical": config_to_dict(config)}
        _emit(format_csv([row], resolved_config(None, settings, extra)), args.out)
        if args.checkpoint:
            save_checkpoint(args.checkpoint, final, config)
        return 0 if row.ok else 2
    except Chi2PhaseError as exc:
        print(f"chi2phase: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
