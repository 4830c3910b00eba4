import numpy as np
import pytest
from scipy.optimize import brentq

from tonelli_lab.errors import PreconditionError
from tonelli_lab.hamiltonians import build
from tonelli_lab.periodic_tori import (PeriodicTorusData, build_torus, cohomology_class_of,
                                       period_action_profile, zero_class_check)

# loop action profile of mech2d at T = 1, r = (1, 0) on a 4 x 4 grid of base
# points; the model is not integrable, so the profile is not constant
MECH2D_PROFILE_SPREAD = 0.40000000000000024


@pytest.fixture(scope="module")
def convex_torus():
    return build_torus(build("convex-flat"), 1.0, [1], grid=16)


def test_convex_flat_momentum_is_the_root(convex_torus):
    root = brentq(lambda p: p + p ** 3 - 1.0, 0.0, 1.0, xtol=1e-15)
    assert np.allclose(convex_torus.P, root, atol=1e-12)
    assert np.allclose(cohomology_class_of(convex_torus), root)


def test_flat_torus_of_rational_direction():
    torus = build_torus(build("flat", 2), 2.0, [1, -1], grid=8)
    assert np.allclose(torus.P, [0.5, -0.5])
    assert np.allclose(torus.action_per_orbit, 0.5)


def test_shear_torus_is_the_shifted_graph():
    torus = build_torus(build("shear"), 1.0, [1], grid=16)
    d = torus.diagnostics
    th = torus.nodes()[:, 0]
    assert np.allclose(torus.P[:, 0], 1.0 + 0.3 * np.cos(2 * np.pi * th), atol=1e-7)
    assert d["closure"] < 1e-10 and d["action_spread"] < 1e-10
    assert d["winding_ok"] and d["invariance_0.5T"] < 1e-6


def test_off_grid_section_interpolates(convex_torus):
    assert np.allclose(convex_torus.section([[0.123]]), convex_torus.P[0])


def test_round_trip_through_dict(convex_torus):
    again = PeriodicTorusData.from_dict(convex_torus.to_dict())
    assert np.allclose(again.P, convex_torus.P)
    assert again.T == convex_torus.T and again.r.tolist() == [1]


def test_contractible_orbits_are_rest_points():
    out = zero_class_check(build("convex-flat"), 1.0, grid=8)
    assert out["sup_velocity"] < 1e-12
    assert np.allclose(out["c"], 0.0)


def test_guards():
    with pytest.raises(PreconditionError):
        build_torus(build("flat"), -1.0, [1])
    with pytest.raises(PreconditionError):
        build_torus(build("flat", 2), 1.0, [1])


def test_loop_action_constant_on_integrable_tori():
    prof = period_action_profile(build("flat", 2), 1.0, [1, 0], grid=4)
    assert prof["spread"] < 1e-12


def test_mech2d_profile_regression():
    prof = period_action_profile(build("mech2d"), 1.0, [1, 0], grid=4)
    assert abs(prof["spread"] - MECH2D_PROFILE_SPREAD) < 1e-9
    assert prof["max_residual"] < 1e-7
