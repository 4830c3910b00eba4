import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tonelli_lab.errors import PreconditionError
from tonelli_lab.hamiltonians import build
from tonelli_lab.weak_kam import (LaxOleinik, action_kernel, aubry_estimate, foliation_map,
                                  lax_oleinik_alpha, radial_convergence_probe)


@pytest.fixture(scope="module")
def flat_kernel():
    return action_kernel(build("flat"), 64, 0.5)


@pytest.fixture(scope="module")
def pendulum_grid():
    return lax_oleinik_alpha(build("pendulum"), [0.0], tau=0.25, grid=64)


def test_kernel_is_the_free_action(flat_kernel):
    d = flat_kernel.displacements()[:, 0]
    assert np.allclose(flat_kernel.values, d ** 2 / (2 * 0.5), atol=1e-12)
    assert flat_kernel.max_residual < 1e-9


@settings(max_examples=15)
@given(st.floats(-1.0, 1.0))
def test_flat_alpha_is_half_the_square(flat_kernel, c):
    vg = lax_oleinik_alpha(build("flat"), [c], kernel=flat_kernel)
    assert abs(vg.alpha - 0.5 * c * c) < 1e-6
    assert vg.converged and vg.lift_bound_ok


def test_alpha_is_convex_along_a_segment(flat_kernel):
    H = build("shear")
    kernel = action_kernel(H, 64, 0.5)
    cs = np.linspace(-0.6, 0.6, 7)
    alphas = np.array([lax_oleinik_alpha(H, [c], kernel=kernel).alpha for c in cs])
    assert np.all(np.diff(alphas, 2) > -1e-6)


def test_operator_commutes_with_constants(flat_kernel, rng):
    op = LaxOleinik(flat_kernel, [0.2])
    u = rng.normal(size=64)
    a, _ = op.apply(u)
    b, _ = op.apply(u + 3.0)
    assert np.allclose(b - a, 3.0)


def test_operator_is_monotone(flat_kernel, rng):
    op = LaxOleinik(flat_kernel, [0.2])
    u = rng.normal(size=64)
    a, _ = op.apply(u, refine=False)
    b, _ = op.apply(u + np.abs(rng.normal(size=64)), refine=False)
    assert np.all(b >= a - 1e-14)


def test_pendulum_critical_value_and_strict_aubry_set(pendulum_grid):
    vg = pendulum_grid
    assert abs(vg.alpha - 1.0) < 2e-2
    est = aubry_estimate(vg)
    strict = est.strict_mask
    # the hyperbolic fixed point is in the Aubry set, the elliptic one is not
    assert strict[0] and not strict[32]
    assert strict.sum() < 8


def test_tau_outside_range_is_rejected():
    with pytest.raises(PreconditionError):
        action_kernel(build("flat"), 64, 2.0)
    with pytest.raises(PreconditionError):
        lax_oleinik_alpha(build("flat"), [0.0], grid=16)


def test_convex_flat_foliation():
    classes = np.linspace(-0.5, 0.5, 5)[:, None]
    rep = foliation_map(build("convex-flat"), [0.3], classes, grid=64)
    assert rep.monotone and not rep.flagged
    assert rep.energy_defect < 5e-3
    assert np.allclose(rep.at_x[:, 0], classes[:, 0], atol=1e-6)


def test_radial_velocities_approach_the_aubry_velocity():
    rep = radial_convergence_probe(build("shear"), [0.3], [0.2], [2.0, 5.0, 10.0], [0.3])
    assert rep.classes == [[1], [2], [3]]
    assert rep.non_increasing
    assert np.allclose(rep.distances[:2], [0.19999534, 0.09999702], atol=1e-6)
    assert rep.final_distance < 1e-5


def test_radial_probe_on_a_resonant_flat_class():
    rep = radial_convergence_probe(build("flat", 2), [0.5, 0.0], [0.1, 0.7], [4.0, 8.0],
                                   [0.5, 0.0])
    assert max(rep.distances) < 1e-9
