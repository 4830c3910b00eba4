import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tonelli_lab.errors import EvaluationError, PreconditionError
from tonelli_lab.hamiltonians import (CATALOGUE, CotangentState, HamiltonianModel, LiftedState,
                                      build, inverse_legendre, lagrangian,
                                      lagrangian_derivatives, legendre, shear_section)

coord = st.floats(-2.0, 2.0)
MODELS = [("flat", 2), ("convex-flat", 2), ("shear", 2), ("pendulum", None), ("mech2d", None),
          ("metric1d", None)]


@pytest.mark.parametrize("name,n", MODELS)
def test_gradients_match_finite_differences(name, n, rng):
    H = build(name, n)
    x = rng.uniform(0, 1, (5, H.n))
    p = rng.uniform(-1, 1, (5, H.n))
    hx, hp = H.gradients(x, p)
    eps = 1e-6
    for k in range(H.n):
        e = np.zeros(H.n)
        e[k] = eps
        assert np.allclose((H(x + e, p) - H(x - e, p)) / (2 * eps), hx[:, k], atol=1e-7)
        assert np.allclose((H(x, p + e) - H(x, p - e)) / (2 * eps), hp[:, k], atol=1e-7)


@pytest.mark.parametrize("name,n", MODELS)
def test_hessians_match_finite_differences(name, n, rng):
    H = build(name, n)
    x = rng.uniform(0, 1, (4, H.n))
    p = rng.uniform(-1, 1, (4, H.n))
    hxx, hxp, hpp = H.hessians(x, p)
    eps = 1e-6
    for k in range(H.n):
        e = np.zeros(H.n)
        e[k] = eps
        dx = (H.gradients(x + e, p)[0] - H.gradients(x - e, p)[0]) / (2 * eps)
        dp = (H.gradients(x, p + e)[1] - H.gradients(x, p - e)[1]) / (2 * eps)
        assert np.allclose(hxx[:, :, k], dx, atol=1e-6)
        assert np.allclose(hpp[:, :, k], dp, atol=1e-6)
        dpx = (H.gradients(x + e, p)[1] - H.gradients(x - e, p)[1]) / (2 * eps)
        # hxp[..., i, j] = d2H / dx_i dp_j
        assert np.allclose(hxp[:, k, :], dpx, atol=1e-6)


@pytest.mark.parametrize("name,n", MODELS)
def test_fiberwise_convexity(name, n, rng):
    H = build(name, n)
    x = rng.uniform(0, 1, (20, H.n))
    p = rng.uniform(-3, 3, (20, H.n))
    assert np.all(np.linalg.eigvalsh(H.hessians(x, p)[2]) > 0)


@pytest.mark.parametrize("name,n", MODELS)
@given(data=st.data())
def test_legendre_round_trip(name, n, data):
    H = build(name, n)
    x = np.array(data.draw(st.lists(coord, min_size=H.n, max_size=H.n)))
    v = np.array(data.draw(st.lists(coord, min_size=H.n, max_size=H.n)))
    p = legendre(H, x, v)
    assert np.allclose(inverse_legendre(H, x, p), v, atol=1e-11)


@given(x=coord, v=coord)
def test_closed_form_lagrangian_matches_legendre(x, v):
    for H in (build("shear"), build("metric1d"), build("pendulum")):
        xv, vv = np.array([x]), np.array([v])
        assert np.isclose(lagrangian(H, xv, vv), H.lagrangian_fn(xv, vv), atol=1e-10)


def test_lagrangian_second_derivatives_by_differences(rng):
    H = build("shear", 2)
    x = rng.uniform(0, 1, 2)
    v = rng.uniform(-1, 1, 2)
    L, Lx, Lv, Lxx, Lxv, Lvv = lagrangian_derivatives(H, x, v)
    eps = 1e-5
    for k in range(2):
        e = np.zeros(2)
        e[k] = eps
        dLv_dv = (lagrangian_derivatives(H, x, v + e)[2] - lagrangian_derivatives(H, x, v - e)[2])
        dLx_dx = (lagrangian_derivatives(H, x + e, v)[1] - lagrangian_derivatives(H, x - e, v)[1])
        dLv_dx = (lagrangian_derivatives(H, x + e, v)[2] - lagrangian_derivatives(H, x - e, v)[2])
        assert np.allclose(Lvv[:, k], dLv_dv / (2 * eps), atol=1e-6)
        assert np.allclose(Lxx[:, k], dLx_dx / (2 * eps), atol=1e-6)
        assert np.allclose(Lxv[k, :], dLv_dx / (2 * eps), atol=1e-6)


def test_flat_lagrangian_is_kinetic_energy():
    H = build("flat", 3)
    v = np.array([0.1, -0.2, 0.3])
    assert np.isclose(lagrangian(H, np.zeros(3), v), 0.5 * v @ v)


def test_from_energy_derivatives(rng):
    ref = build("pendulum")
    H = HamiltonianModel.from_energy("pend-fd", 1, ref.energy)
    x = rng.uniform(0, 1, (6, 1))
    p = rng.uniform(-1, 1, (6, 1))
    assert np.allclose(H.gradients(x, p)[0], ref.gradients(x, p)[0], atol=1e-7)
    assert np.allclose(H.hessians(x, p)[2], ref.hessians(x, p)[2], atol=1e-4)


def test_non_finite_evaluation_raises():
    H = HamiltonianModel.from_energy("bad", 1, lambda x, p: np.sum(p * p, -1) / 0.0)
    with np.errstate(all="ignore"), pytest.raises(EvaluationError):
        H.gradients(np.zeros((1, 1)), np.ones((1, 1)))


def test_catalogue_guards():
    with pytest.raises(PreconditionError):
        build("nope")
    with pytest.raises(PreconditionError):
        build("pendulum", 2)
    assert set(CATALOGUE) >= {"flat", "convex-flat", "shear", "pendulum", "mech2d"}


def test_states_reduce_angles():
    s = CotangentState([1.25, -0.5], [0.0, 1.0])
    assert np.allclose(s.theta, [0.25, 0.5])
    lifted = LiftedState([2.5, -0.25], [0.0, 0.0])
    assert lifted.winding.tolist() == [2, -1]
    assert np.allclose(lifted.theta, [0.5, 0.75])
    assert np.allclose(lifted.project().theta, [0.5, 0.75])
    with pytest.raises(PreconditionError):
        CotangentState([0.0], [0.0, 1.0])


def test_shear_section_is_the_graph_of_b():
    H = build("shear", 1, {"c": [0.4]})
    x = np.linspace(0, 1, 7)[:, None]
    assert np.allclose(shear_section(H, x)[:, 0], 0.4 + 0.3 * np.cos(2 * np.pi * x[:, 0]))
    assert np.allclose(H(x, shear_section(H, x)), 0.0)
