import numpy as np
import pytest

from acsphere.errors import ConfigurationError
from acsphere.flow import energy
from acsphere.geometry import Isometry, apply_isometry, build_grid, integrate, laplace_beltrami
from acsphere.potential import DoubleWell
from acsphere.stationary import (NEWTON_TOL, RadialProfile, lift_profile, solve_ground_state,
                                 solve_torus_symmetric)

TORUS_AREA = 2 * np.pi**2
SPHERE_AREA = 4 * np.pi
POLE = np.array([0.5, 0.5, -0.5, -0.5])


@pytest.fixture(scope="module")
def torus05():
    return solve_torus_symmetric(DoubleWell(), 0.05, 512)


@pytest.fixture(scope="module")
def ground05():
    return solve_ground_state(DoubleWell(), 0.05, 512)


def test_torus_profile(torus05):
    p = torus05
    assert p.residual < NEWTON_TOL
    assert np.max(np.abs(p.equation_residual())) < NEWTON_TOL
    assert np.array_equal(p.values, -p.values[::-1])
    assert np.all(p.values[: p.n // 2] > 0)
    assert np.all(np.abs(p.values) < 1)
    # near the focal circle eta = 0
    assert abs(p.values[0] - 1) < 1e-3
    # the nodal surface eta = pi/4 is the middle face
    mid = 0.5 * (p.values[p.n // 2 - 1] + p.values[p.n // 2])
    assert mid == 0.0


def test_ground_profile(ground05):
    p = ground05
    assert p.residual < NEWTON_TOL
    assert np.array_equal(p.values, -p.values[::-1])
    assert np.all(p.values[: p.n // 2] > 0)
    assert np.all(np.abs(p.values) <= 1)
    # strictly decreasing across the layer
    r = p.nodes
    layer = np.abs(r - np.pi / 2) < 0.3
    assert np.all(np.diff(p.values[layer]) < 0)


def test_energy_ordering_and_areas(torus05, ground05):
    assert torus05.energy() > ground05.energy() > 0
    assert 0.95 * TORUS_AREA <= torus05.area_proxy() <= TORUS_AREA
    assert abs(ground05.area_proxy() / SPHERE_AREA - 1) < 0.025


def test_equipartition_improves_with_eps():
    W = DoubleWell()
    d = [solve_torus_symmetric(W, e, 512).equipartition_defect() for e in (0.1, 0.05)]
    assert d[1] < d[0]


def test_constant_profile():
    p = RadialProfile.constant(1.0, 0.1, 32)
    assert p.energy() == 0.0
    assert p.area_proxy() == 0.0


@pytest.mark.parametrize("eps,n", [(0.05, 32), (0.0, 64), (0.1, 63), (0.1, 6)])
def test_bad_parameters(eps, n):
    with pytest.raises(ConfigurationError):
        solve_torus_symmetric(DoubleWell(), eps, n)


def test_lift_eta_profile_symmetries():
    p = solve_torus_symmetric(DoubleWell(), 0.1, 32)
    g = build_grid(32, 16, 16)
    u = lift_profile(p, g)
    assert np.array_equal(u[:, 0, 0], p.values)
    for P in (Isometry.rho(np.pi / 8), Isometry.tau(3 * np.pi / 8)):
        assert np.array_equal(apply_isometry(g, P, u), u)
    assert np.array_equal(apply_isometry(g, Isometry.swap_s(), u), -u)
    with pytest.raises(ConfigurationError):
        lift_profile(p, g, POLE)


def test_lift_interpolated_keeps_bounds():
    p = solve_torus_symmetric(DoubleWell(), 0.1, 256)
    g = build_grid(48, 8, 8)
    u = lift_profile(p, g)
    assert np.max(np.abs(u)) < 1
    assert np.array_equal(apply_isometry(g, Isometry.swap_s(), u), -u)


def test_geodesic_lift_vanishes_on_equator():
    p = solve_ground_state(DoubleWell(), 0.1, 256)
    g = build_grid(16, 16, 16)
    u = lift_profile(p, g, POLE)
    x = g.embedding()
    on = np.abs(np.tensordot(POLE, x, axes=1)) < 1e-14
    assert on.any()
    assert np.max(np.abs(u[on])) < 1e-14
    with pytest.raises(ConfigurationError):
        lift_profile(p, g, [1.0, 1.0, 0.0, 0.0])
    with pytest.raises(ConfigurationError):
        lift_profile(p, g)


def test_lifted_equation_residual_decreases():
    # residual of eps^2 Lap u - W'(u) for the lifted torus solution
    W = DoubleWell()
    res = []
    for n in (32, 64):
        p = solve_torus_symmetric(W, 0.1, n)
        g = build_grid(n, 8, 8)
        u = lift_profile(p, g)
        r = 0.01 * laplace_beltrami(g, u) - W.dW(u)
        res.append(np.max(np.abs(r)))
    assert max(res) < 1e-9


def test_lifted_energy_matches_1d(torus05):
    g = build_grid(512, 8, 8)
    assert energy(g, lift_profile(torus05, g), 0.05) == pytest.approx(torus05.energy(), rel=1e-12)


def test_csv(tmp_path, torus05):
    torus05.to_csv(tmp_path / "t.csv")
    data = np.loadtxt(tmp_path / "t.csv", delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 1], torus05.values)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "eta,value"
