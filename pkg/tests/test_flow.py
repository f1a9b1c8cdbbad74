import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acsphere.errors import ConfigurationError, EnergyIncreaseError, NumericalError
from acsphere.flow import (LOG_HEADER, EnergyLog, Stepper, StepperConfig, crossings,
                           default_r_max, energy, energy_change, energy_split, init_unstable,
                           make_state, normalize_time, run, step)
from acsphere.geometry import Isometry, apply_isometry, build_grid
from acsphere.potential import DoubleWell
from acsphere.spectrum import morse_index, unstable_basis
from acsphere.stationary import lift_profile, solve_ground_state, solve_torus_symmetric

SIGMA = np.sqrt(2) / 3


@pytest.fixture(scope="module")
def grid():
    return build_grid(32, 32, 32)


@pytest.fixture(scope="module")
def setup(grid):
    p = solve_torus_symmetric(DoubleWell(), 0.1, 32)
    spec = morse_index(p, k_max=4, n_phi=(32, 32))
    return p, unstable_basis(spec, grid)


def test_energy_of_constants(grid):
    assert energy(grid, grid.constant(1.0), 0.1) == 0.0
    assert energy(grid, grid.constant(-1.0), 0.1) == 0.0
    assert energy(grid, grid.constant(0.0), 0.05) == pytest.approx(2 * np.pi**2 / (4 * 0.05),
                                                                    rel=1e-12)
    d, p = energy_split(grid, grid.coordinate(0), 0.1)
    assert d > 0 and p > 0


def test_config_validation():
    with pytest.raises(ConfigurationError):
        StepperConfig(scheme="rk4")
    with pytest.raises(ConfigurationError):
        StepperConfig(eps=0.1, scheme="imex", dt=0.006)
    with pytest.raises(ConfigurationError):
        StepperConfig(dt=-1.0)
    assert StepperConfig(eps=0.1).step_size == pytest.approx(1e-3)


@pytest.mark.parametrize("scheme", ["convex_split", "imex", "secant"])
def test_zero_is_fixed(grid, scheme):
    cfg = StepperConfig(eps=0.1, scheme=scheme)
    s = step(grid, make_state(grid, grid.constant(0.0), 0.1), cfg)
    assert np.array_equal(s.field, grid.constant(0.0))


@settings(max_examples=20, deadline=None)
@given(c=st.floats(-0.99, 0.99))
def test_constant_scalar_update(c):
    g = build_grid(8, 8, 8)
    eps = 0.1
    cfg = StepperConfig(eps=eps)
    k = cfg.step_size / eps**2
    s = step(g, make_state(g, g.constant(c), eps), cfg)
    expect = (c + k * (2 * c - (c**3 - c))) / (1 + 2 * k)
    assert np.allclose(s.field, expect, rtol=1e-13, atol=1e-15)


def test_critical_point_nearly_fixed(grid, setup):
    p, basis = setup
    st0 = init_unstable(grid, p, basis, np.zeros(5))
    s1 = step(grid, st0, StepperConfig(eps=0.1))
    assert abs(s1.energy - st0.energy) < 1e-10 * abs(st0.energy)


def test_phi1_direction_above_critical_point(grid, setup):
    p, basis = setup
    u0 = init_unstable(grid, p, basis, [0.05, 0, 0, 0, 0]).field
    assert np.all(u0 > lift_profile(p, grid))


def test_init_rejections(grid, setup):
    p, basis = setup
    r_max = default_r_max(grid, p)
    with pytest.raises(ConfigurationError):
        init_unstable(grid, p, basis, [1.01 * r_max, 0, 0, 0, 0])
    with pytest.raises(ConfigurationError):
        init_unstable(grid, p, basis, [0.1, 0, 0, 0])
    with pytest.raises(ConfigurationError, match="max"):
        init_unstable(grid, p, basis, [5.0, 0, 0, 0, 0], r_max=10.0)


def test_init_equivariance(grid, setup):
    p, basis = setup
    a = np.array([0.0, 0.03, 0.01, -0.02, 0.04])
    R = Isometry.rho(2 * np.pi * 5 / 32)
    u = init_unstable(grid, p, basis, a).field
    v = init_unstable(grid, p, basis, R.act_on_direction(a)).field
    assert np.max(np.abs(apply_isometry(grid, R, u) - v)) < 1e-14


def test_step_equivariance(grid, setup):
    p, basis = setup
    a = np.array([0.01, 0.03, 0.01, -0.02, 0.04])
    u = init_unstable(grid, p, basis, a)
    cfg = StepperConfig(eps=0.1)
    stepper = Stepper(grid, cfg)
    for P in (Isometry.rho(np.pi / 4), Isometry.swap_s(), Isometry.reflect([0, 0, 0, 1])):
        a1 = apply_isometry(grid, P, stepper.step(u).field)
        a2 = stepper.step(make_state(grid, apply_isometry(grid, P, u.field), 0.1)).field
        assert np.max(np.abs(a1 - a2)) < 1e-13


@pytest.mark.parametrize("scheme", ["convex_split", "imex", "secant"])
def test_energy_decreases(grid, setup, scheme):
    p, basis = setup
    s = init_unstable(grid, p, basis, [0.0, 0.05, 0.05, -0.05, -0.05])
    cfg = StepperConfig(eps=0.1, scheme=scheme, t_end=0.05, tol_stationary=0.0)
    final, elog = run(grid, s, cfg)
    e = elog.column("energy")
    assert np.all(np.diff(e) < 0)
    assert np.all(elog.column("max_abs_u") < 1)
    assert final.step_count == 50


def test_secant_energy_law_exact(grid, setup):
    p, basis = setup
    s = init_unstable(grid, p, basis, [0.0, 0.05, 0.05, -0.05, -0.05])
    cfg = StepperConfig(eps=0.1, scheme="secant", t_end=0.1, tol_stationary=0.0)
    final, _ = run(grid, s, cfg)
    drop = s.energy - final.energy
    assert abs(drop - final.dissipated) < 1e-9 * drop


def test_symmetrized_run_keeps_symmetry(grid, setup):
    p, basis = setup
    v = np.array([1.0, -1.0, 0.0, 0.0]) / np.sqrt(2.0)
    w = np.array([0.0, 0.0, 1.0, -1.0]) / np.sqrt(2.0)
    gens = (Isometry.reflect(v), Isometry.reflect(w), Isometry.swap_s().negated())
    s = init_unstable(grid, p, basis, [0.0, 0.05, 0.05, -0.05, -0.05])
    cfg = StepperConfig(eps=0.1, t_end=0.02, symmetrize=gens)
    final, _ = run(grid, s, cfg)
    for P in gens:
        assert np.array_equal(apply_isometry(grid, P, final.field), final.field)


def test_energy_increase_detected(grid):
    # S = 0 with a large step on a steep field breaks energy stability
    u = 0.9 * np.sign(grid.coordinate(0)) * (np.abs(grid.coordinate(0)) > 0.2)
    cfg = StepperConfig(eps=0.1, S=0.0, dt=0.2, energy_rtol=1e-12)
    with pytest.raises((EnergyIncreaseError, NumericalError)):
        state = make_state(grid, u, 0.1)
        for _ in range(5):
            state = step(grid, state, cfg)


def test_run_stops_when_stationary(grid):
    u = 0.5 + 0.01 * grid.coordinate(0)
    cfg = StepperConfig(eps=0.1, t_end=50.0, tol_stationary=1e-8, log_every=50)
    final, elog = run(grid, make_state(grid, u, 0.1), cfg)
    assert elog.notes["reason"] == "stationary"
    assert np.max(np.abs(final.field - 1)) < 1e-3


def test_snapshots_written(tmp_path, grid):
    u = 0.5 + 0.01 * grid.coordinate(0)
    cfg = StepperConfig(eps=0.1, t_end=0.01, snapshot_every=4)
    run(grid, make_state(grid, u, 0.1), cfg, snapshot_dir=tmp_path)
    names = sorted(f.name for f in tmp_path.iterdir())
    assert names == ["snap_00000000.bin", "snap_00000004.bin", "snap_00000008.bin",
                     "snap_00000010.bin"]


def make_log(energies, times=None):
    log = EnergyLog(SIGMA)
    times = np.arange(len(energies)) if times is None else times
    for i, (t, e) in enumerate(zip(times, energies)):
        log.append(step=i, time=float(t), energy=e, area_proxy=e / (2 * SIGMA),
                   dissipation=0.0, discrepancy=0.0, max_abs_u=0.5)
    return log


def test_normalize_time():
    level = 2 * SIGMA * (5 * np.pi)
    assert level == pytest.approx(10 * np.pi * np.sqrt(2) / 3, rel=1e-15)
    log = make_log([16.0, 15.0, 14.0, 13.0])
    t = normalize_time(log, SIGMA)
    assert t == pytest.approx(1 + (15.0 - level) / 1.0)
    assert crossings(log, SIGMA) == 1
    assert normalize_time(make_log([16.0, level, 13.0]), SIGMA) == 1.0
    with pytest.raises(NumericalError, match="not crossed"):
        normalize_time(make_log([20.0, 19.0]), SIGMA)


def test_energy_log_csv(tmp_path):
    log = make_log([3.0, 2.0])
    log.to_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == ",".join(LOG_HEADER)
    assert len(lines) == 3


def test_roundoff_overshoot_clipped(grid):
    cfg = StepperConfig(eps=0.1, t_end=0.01)
    stepper = Stepper(grid, cfg)
    u = grid.constant(1.0)
    u[0, 0, 0] = np.nextafter(1.0, 2.0)
    s = stepper.step(make_state(grid, u, 0.1))
    assert s.max_abs <= 1.0
    assert stepper.clipped == 1
    u[0, 0, 0] = 1.001
    with pytest.raises(NumericalError, match="maximum principle"):
        stepper.step(make_state(grid, u, 0.1))


@pytest.mark.parametrize("angular", ["fd", "spectral"])
def test_energy_change_matches_difference(grid, angular):
    rng = np.random.default_rng(5)
    u = np.tanh(rng.standard_normal(grid.shape))
    v = np.tanh(rng.standard_normal(grid.shape))
    direct = energy(grid, v, 0.1, angular=angular) - energy(grid, u, 0.1, angular=angular)
    assert energy_change(grid, u, v, 0.1, angular=angular) == pytest.approx(direct, rel=1e-12)


def test_energy_change_resolves_tiny_steps(grid):
    # next to a stationary ground state one step lowers E by far less than
    # an ulp of E; the increment form still gets the sign and size right
    u = lift_profile(solve_ground_state(DoubleWell(), 0.1, 256), grid, [0.5, 0.5, -0.5, -0.5])
    stepper = Stepper(grid, StepperConfig(eps=0.1))
    s = make_state(grid, u, 0.1)
    for _ in range(2000):
        s = stepper.step(s)
    n = stepper.step(s)
    change = energy_change(grid, s.field, n.field, 0.1)
    assert change < 0
    assert abs(change) < 1e-2 * np.spacing(s.energy)
    # the drop exceeds dt * eps ||du/dt||^2 by the splitting's own dissipation
    assert 1.0 < -change / (StepperConfig(eps=0.1).step_size * n.last_rate) < 1.5
    assert stepper.max_increase < 0
