import numpy as np
import pytest

from tonelli_lab.errors import InvalidPlaneError, PreconditionError
from tonelli_lab.green import (LagrangianPlane, conjugate_scan, green_intersection_dim,
                               green_minus, green_order_gap, green_plus, lyapunov_spectrum)
from tonelli_lab.hamiltonians import build
from tonelli_lab.integrators import IntegratorSpec


def test_plane_from_frame():
    frame = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 1.0], [1.0, 3.0]])
    pl = LagrangianPlane.from_frame(frame)
    assert pl.is_graph and np.allclose(pl.S, [[2.0, 1.0], [1.0, 3.0]])
    vertical = np.vstack([np.zeros((2, 2)), np.eye(2)])
    assert not LagrangianPlane.from_frame(vertical).is_graph
    with pytest.raises(InvalidPlaneError):
        LagrangianPlane.from_frame(np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [0.0, 0.0]]))


def test_flat_green_bundles_are_horizontal():
    H = build("flat", 2)
    gp = green_plus(H, ([0.1, 0.2], [0.3, 0.4]), 8.0, IntegratorSpec(h=1e-2))
    gm = green_minus(H, ([0.1, 0.2], [0.3, 0.4]), 8.0, IntegratorSpec(h=1e-2))
    assert np.allclose(gp.matrices[-1], np.eye(2) / 8.0, atol=1e-12)
    assert gp.mode == "extrapolated" and np.allclose(gp.limit, 0.0, atol=1e-12)
    assert gp.monotone and gm.monotone
    assert green_intersection_dim(gm, gp) == 2


def test_pendulum_hyperbolic_slopes():
    H = build("pendulum")
    spec = IntegratorSpec(h=1e-3)
    gp = green_plus(H, ([0.0], [0.0]), 5.0, spec, levels=2)
    gm = green_minus(H, ([0.0], [0.0]), 5.0, spec, levels=2)
    assert abs(gp.limit[0, 0] - 2 * np.pi) < 1e-4
    assert abs(gm.limit[0, 0] + 2 * np.pi) < 1e-4
    assert green_order_gap(gm, gp) > 12.0
    assert green_intersection_dim(gm, gp) == 0


def test_green_horizon_guard():
    with pytest.raises(PreconditionError):
        green_plus(build("flat"), ([0.0], [0.0]), 0.0)


def test_conjugate_times_at_the_elliptic_point():
    rep = conjugate_scan(build("pendulum"), ([0.5], [1e-6]), 1.2)
    assert len(rep.times) == 2
    assert abs(rep.times[0] - 0.5) < 1e-3 and abs(rep.times[1] - 1.0) < 1e-3


def test_no_conjugate_points_on_rotational_shear_orbit():
    rep = conjugate_scan(build("shear"), ([0.2], [0.8]), 10.0, IntegratorSpec(h=1e-2))
    assert rep.times == []


def test_lyapunov_pairing_and_zero_count():
    rep = lyapunov_spectrum(build("mech2d"), ([0.5, 0.5], [0.0, 0.0]), 50.0,
                            IntegratorSpec(h=1e-2))
    # elliptic-elliptic? no: cos potential, (1/2, 1/2) is a minimum of V
    assert rep.pairing_defect < 1e-8
    assert rep.exponents.shape == (4,)


def test_lyapunov_pendulum_saddle():
    rep = lyapunov_spectrum(build("pendulum"), ([0.0], [0.0]), 200.0, IntegratorSpec(h=1e-2))
    assert abs(rep.exponents[0] - 2 * np.pi) < 0.05 * 2 * np.pi
    assert rep.zero_count == 0
