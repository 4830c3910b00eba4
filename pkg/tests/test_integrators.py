import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tonelli_lab.errors import PreconditionError
from tonelli_lab.hamiltonians import build
from tonelli_lab.integrators import (IntegratorSpec, field_jacobian, flow, integrate,
                                     tangent_flow, vector_field)


def _symplectic_defect(D, n):
    J = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    return np.max(np.abs(D.T @ J @ D - J))


def test_flat_flow_is_linear():
    H = build("flat", 2)
    out = flow(H, ([0.25, 0.5], [0.3, -1.2]), 2.0, IntegratorSpec(h=0.1))
    assert np.allclose(out.x, [0.85, -1.9], atol=1e-14)
    assert np.allclose(out.p, [0.3, -1.2])
    assert out.winding.tolist() == [0, -2]


def test_scheme_resolution():
    assert IntegratorSpec().resolve(build("pendulum")) == "verlet"
    assert IntegratorSpec().resolve(build("shear")) == "midpoint"
    with pytest.raises(PreconditionError):
        IntegratorSpec(scheme="verlet").resolve(build("shear"))
    with pytest.raises(PreconditionError):
        IntegratorSpec(h=0.0)


@pytest.mark.parametrize("name", ["pendulum", "shear", "metric1d", "convex-flat"])
@given(x=st.floats(0, 1), p=st.floats(-1.5, 1.5))
def test_energy_is_nearly_conserved(name, x, p):
    H = build(name)
    z = (np.array([x]), np.array([p]))
    out = flow(H, z, 1.0, IntegratorSpec(h=1e-2))
    e0 = float(H(z[0], z[1]))
    assert abs(float(H(out.x, out.p)) - e0) < 5e-3 * (1 + abs(e0))


@pytest.mark.parametrize("name,n", [("pendulum", None), ("shear", 2), ("mech2d", None)])
def test_tangent_map_is_symplectic(name, n):
    H = build(name, n)
    z = (np.full(H.n, 0.2), np.full(H.n, 0.4))
    fr = tangent_flow(H, z, 0.7, spec=IntegratorSpec(h=1e-2))
    assert _symplectic_defect(fr.vectors, H.n) < 1e-10


@pytest.mark.parametrize("name,n", [("pendulum", None), ("shear", 1), ("mech2d", None)])
def test_tangent_map_matches_finite_differences(name, n):
    H = build(name, n)
    spec = IntegratorSpec(h=1e-2)
    z0 = np.concatenate([np.full(H.n, 0.2), np.full(H.n, 0.4)])
    fr = tangent_flow(H, (z0[:H.n], z0[H.n:]), 0.5, spec=spec)
    eps = 1e-6
    for k in range(2 * H.n):
        e = np.zeros(2 * H.n)
        e[k] = eps
        a = flow(H, ((z0 + e)[:H.n], (z0 + e)[H.n:]), 0.5, spec)
        b = flow(H, ((z0 - e)[:H.n], (z0 - e)[H.n:]), 0.5, spec)
        col = np.concatenate([a.x - b.x, a.p - b.p]) / (2 * eps)
        assert np.allclose(fr.vectors[:, k], col, atol=1e-6)


@pytest.mark.parametrize("name", ["pendulum", "shear"])
def test_time_reversal(name):
    H = build(name)
    z = (np.array([0.1]), np.array([0.6]))
    spec = IntegratorSpec(h=1e-2)
    fwd = flow(H, z, 1.3, spec)
    back = flow(H, (fwd.x, fwd.p), -1.3, spec)
    assert np.allclose(back.x, z[0], atol=1e-12)
    assert np.allclose(back.p, z[1], atol=1e-12)


def test_midpoint_is_second_order():
    H = build("shear")
    z = (np.array([0.1]), np.array([0.6]))
    ref = flow(H, z, 1.0, IntegratorSpec(h=1e-4))
    errs = [abs(flow(H, z, 1.0, IntegratorSpec(h=h)).x[0] - ref.x[0]) for h in (0.02, 0.01)]
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_verlet_is_second_order():
    H = build("pendulum")
    z = (np.array([0.1]), np.array([0.6]))
    ref = flow(H, z, 1.0, IntegratorSpec(h=1e-4))
    errs = [abs(flow(H, z, 1.0, IntegratorSpec(h=h)).x[0] - ref.x[0]) for h in (0.02, 0.01)]
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_vector_field_and_jacobian(rng):
    H = build("shear", 2)
    x, p = rng.uniform(0, 1, 2), rng.uniform(-1, 1, 2)
    def f(z):
        return np.concatenate(vector_field(H, (z[:2], z[2:])))

    A = field_jacobian(H, x, p)
    eps = 1e-6
    z = np.concatenate([x, p])
    for k in range(4):
        e = np.zeros(4)
        e[k] = eps
        assert np.allclose(A[:, k], (f(z + e) - f(z - e)) / (2 * eps), atol=1e-6)
    assert np.allclose(f(z)[:2], p - 0.3 * np.array([np.cos(2 * np.pi * x[0]), 0.0]))


def test_step_count_rounds_to_effective_step():
    H = build("flat")
    x, p, _, _ = integrate(H, np.zeros((1, 1)), np.ones((1, 1)), 0.35, IntegratorSpec(h=0.1))
    assert np.isclose(x[0, 0], 0.35)


def test_renormalized_frame_keeps_log_scale():
    H = build("pendulum")
    frame = np.eye(2)[None]
    _, _, f1, _ = integrate(H, np.zeros((1, 1)), np.zeros((1, 1)), 2.0, IntegratorSpec(h=1e-2),
                            frame=frame)
    _, _, f2, logs = integrate(H, np.zeros((1, 1)), np.zeros((1, 1)), 2.0,
                               IntegratorSpec(h=1e-2), frame=frame, renorm_every=7)
    q, r = np.linalg.qr(f1[0])
    assert np.allclose(np.sort(np.log(np.abs(np.diag(r)))), np.sort(logs[0]), atol=1e-8)
