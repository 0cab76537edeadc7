import math
import warnings

import numpy as np
import pytest

import oracles
from chi2phase.dynamics import (Diagnostics, JointState, KGrid, a_population_series, config_hash,
                                decompose_sectors, evolve, fidelity_from_dynamics, load_checkpoint,
                                pass_time, propagate, save_checkpoint)
from chi2phase.errors import AccuracyError, DomainError, ResolutionError, StepSizeError
from chi2phase.model import DimensionlessParams, JointSpectrum, h_tilde, physical_from_dimensionless


def canonical(alpha, tau, **kw):
    return physical_from_dimensionless(DimensionlessParams(alpha, tau), **kw)


SMALL = KGrid(8.0, 33)


def test_grid_validation():
    with pytest.raises(DomainError):
        KGrid(8.0, 128)
    with pytest.raises(DomainError):
        KGrid(0.0, 33)
    g = KGrid(8.0, 129)
    assert g.n_sectors == 257
    assert g.dk == pytest.approx(0.125)
    assert g.k[64] == 0.0
    with pytest.raises(ResolutionError):
        KGrid(8.0, 33).check_resolves(1.0)
    with pytest.raises(ResolutionError):
        KGrid(4.0, 129).check_resolves(1.0)
    KGrid.default(1.0).check_resolves(1.0)


def test_decompose_round_trip_and_norm():
    c = canonical(1.0, 0.1)
    grid = KGrid()
    spec = JointSpectrum.gaussian(c)
    state = decompose_sectors(spec, grid)
    assert len(state.sectors) == 2 * grid.n - 1
    assert state.norm() == pytest.approx(1.0, abs=1e-6)
    assert state.a_population() == 0
    np.testing.assert_array_equal(state.bc_grid(), spec.on_grid(grid.k) * grid.dk)
    # a sector at K holds the pairs (k, K - k) on the grid
    assert len(state.sector(0).bc_amps) == 1
    assert len(state.sector(grid.n - 1).bc_amps) == grid.n


def test_decompose_rejects_coarse_grid():
    with pytest.raises(ResolutionError):
        decompose_sectors(JointSpectrum.gaussian(canonical(1.0, 0.1)), SMALL)


def test_no_coupling_is_identity():
    c = canonical(math.inf, 0.1)
    spec = JointSpectrum.gaussian(c)
    state = decompose_sectors(spec, KGrid())
    final, diag = evolve(state, c, drain=False)
    np.testing.assert_array_equal(final.bc, state.bc)
    assert final.a_population() == 0
    assert fidelity_from_dynamics(spec, final).overlap == 1
    assert math.isnan(a_population_series(diag))


def test_single_pair_sector_is_a_two_level_system():
    # the lowest sector holds one b-c pair, so it must follow the two-level solution
    c = canonical(1.0, 0.5)
    grid = KGrid(1.0, 3)
    bc = np.zeros((grid.n_sectors, grid.n), dtype=complex)
    bc[0, 0] = 1.0
    state = JointState(grid, np.zeros(grid.n_sectors, dtype=complex), bc)
    k = grid.k[0]
    g = c.epsilon * math.sqrt(2 * math.pi * grid.dk) * h_tilde(c.response, k) ** 2
    delta = k * (c.velocities.v_ab + c.velocities.v_ac)
    for t in (0.1, 0.37, 1.0):
        out = propagate(state, c, t, dt=1e-4)
        a_ref, b_ref = (oracles.to_complex(v) for v in oracles.rabi_two_level(g, delta, t))
        assert abs(out.a[0] - a_ref) < 1e-9
        assert abs(out.bc[0, 0] - b_ref) < 1e-9
        # other sectors were empty and stay empty
        assert np.all(out.a[1:] == 0)


def test_propagate_rejects_backwards_time():
    c = canonical(1.0, 0.5)
    state = decompose_sectors(JointSpectrum.gaussian(c), KGrid())
    with pytest.raises(DomainError):
        propagate(state, c, 0.0)


def test_evolve_rejects_early_stop():
    c = canonical(10.0, 0.1)
    state = decompose_sectors(JointSpectrum.gaussian(c), KGrid())
    with pytest.raises(DomainError):
        evolve(state, c, t_end=c.z0 / c.velocities.v_bc)


@pytest.fixture(scope="module")
def run_10():
    c = canonical(10.0, 0.1)
    spec = JointSpectrum.gaussian(c)
    state = decompose_sectors(spec, KGrid())
    final, diag = evolve(state, c)
    return c, spec, state, final, diag


def test_norm_and_sector_conservation(run_10):
    _, _, state, final, diag = run_10
    assert diag.norm_drift <= 1e-6
    assert diag.sector_norm_drift <= 1e-6
    np.testing.assert_allclose(final.sector_norms(), state.sector_norms(), atol=1e-8)


def test_dynamics_overlap_is_in_unit_disc(run_10):
    _, spec, _, final, diag = run_10
    ov = fidelity_from_dynamics(spec, final)
    assert abs(ov.overlap) <= 1 + 1e-9
    assert not ov.incomplete
    assert 0 < diag.peak_a_population < 1


def test_workers_are_bit_identical():
    c = canonical(10.0, 0.5)
    state = decompose_sectors(JointSpectrum.gaussian(c), KGrid())
    t = c.z0 / c.velocities.v_bc
    serial = propagate(state, c, t, dt=0.05)
    threaded = propagate(state, c, t, dt=0.05, workers=4)
    np.testing.assert_array_equal(serial.a, threaded.a)
    np.testing.assert_array_equal(serial.bc, threaded.bc)


def test_incomplete_run_warns():
    c = canonical(10.0, 0.1)
    spec = JointSpectrum.gaussian(c)
    state = decompose_sectors(spec, KGrid())
    mid = propagate(state, c, c.z0 / c.velocities.v_bc)
    assert mid.a_population() > 1e-4
    with pytest.warns(RuntimeWarning, match="not complete"):
        ov = fidelity_from_dynamics(spec, mid)
    assert ov.incomplete


def test_step_size_error():
    # round-off alone breaks a zero tolerance, and halving cannot fix it
    c = canonical(10.0, 0.5)
    grid = KGrid(8.0, 9)
    bc = np.zeros((grid.n_sectors, grid.n), dtype=complex)
    bc[grid.n - 1, grid.n // 2] = 1.0
    state = JointState(grid, np.zeros(grid.n_sectors, dtype=complex), bc)
    with pytest.raises(StepSizeError) as info:
        evolve(state, c, dt_max=0.05, drain=False, norm_tol=0.0)
    assert isinstance(info.value.estimate, JointState)


def test_checkpoint_round_trip(tmp_path):
    c = canonical(10.0, 0.5)
    state = decompose_sectors(JointSpectrum.gaussian(c), KGrid())
    state = propagate(state, c, 2.0, dt=0.05)
    path = tmp_path / "state.bin"
    save_checkpoint(path, state, c)
    back = load_checkpoint(path, c)
    assert back.time == state.time and back.grid == state.grid
    np.testing.assert_array_equal(back.a, state.a)
    np.testing.assert_array_equal(back.bc, state.bc)
    with pytest.raises(DomainError, match="different configuration"):
        load_checkpoint(path, canonical(11.0, 0.5))
    assert config_hash(c) != config_hash(canonical(11.0, 0.5))
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"X" * 200)
    with pytest.raises(DomainError, match="not a checkpoint"):
        load_checkpoint(bad)


def _diag(times, pop, t_pass):
    return Diagnostics(times, np.ones_like(times), pop, times[1] - times[0], t_pass, 0.0)


def test_decay_fit_on_synthetic_series():
    t = np.linspace(0, 10, 1001)
    pop = np.where(t < 4, 0.5, 0.5 * np.exp(-1.7 * (t - 4)))
    assert a_population_series(_diag(t, pop, 4.0)) == pytest.approx(1.7, rel=1e-10)
    with pytest.raises(AccuracyError):
        a_population_series(_diag(t, pop, 9.99))
    with pytest.raises(AccuracyError, match="e-folds"):
        a_population_series(_diag(t, np.full_like(t, 0.3), 1.0))


def test_quench_decay_matches_golden_rule():
    # a populated, b-c empty.  The excess over the golden rule shrinks with gamma / bandwidth
    # (about 12% at alpha = 100, 4% at 300, 1% at 1000)
    c = canonical(300.0, 0.1)
    grid = KGrid()
    a = np.zeros(grid.n_sectors, dtype=complex)
    a[grid.n - 1] = 1.0
    state = JointState(grid, a, np.zeros((grid.n_sectors, grid.n), dtype=complex))
    times = np.linspace(0.0, 10.0, 41)
    pops = [1.0]
    for t in times[1:]:
        state = propagate(state, c, t)
        pops.append(state.a_population())
    rate = 4 * math.pi * c.epsilon ** 2 * c.sigma / c.velocities.v_bc
    sel = times >= 2.0
    slope = -np.polyfit(times[sel], np.log(pops)[sel], 1)[0]
    assert slope == pytest.approx(rate, rel=0.1)


@pytest.mark.slow
def test_grid_refinement():
    # halving dk (and the step) moves the overlap by far less than 1e-3
    c = canonical(10.0, 0.1)
    spec = JointSpectrum.gaussian(c)
    out = []
    for grid, dt_max in ((KGrid(8.0, 129), 0.05), (KGrid(8.0, 257), 0.025)):
        final, _ = evolve(decompose_sectors(spec, grid), c, dt_max=dt_max)
        with warnings.catch_warnings():
            warnings.simplefilter("error", RuntimeWarning)
            out.append(fidelity_from_dynamics(spec, final).overlap)
    assert abs(out[0] - out[1]) < 1e-3
    assert pass_time(c) > c.z0
