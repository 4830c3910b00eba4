import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from tonelli_lab.errors import (HypothesisViolated, NonFlatTwistError, PreconditionError,
                                SmallDivisorError)
from tonelli_lab.hamiltonians import build
from tonelli_lab.kam import (NAMED_FREQUENCIES, certify_diophantine, diophantine_constant,
                             euler_composition_error, extract_twist, fit_inverse_m,
                             initial_embedding, invariance_error, newton_orders,
                             rescaled_map, solve_invariance, standard_map, torus_family)
from tonelli_lab.periodic_tori import PeriodicTorusData, build_torus

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def test_golden_constant_is_attained_at_the_first_denominator():
    cert = certify_diophantine("golden")
    # |k omega - l| |k| is smallest at k = 1, l = 1 for tau = 1
    assert abs(cert.gamma - (1.0 - GOLDEN)) < 1e-15
    assert cert.tau == 1.0


@given(st.integers(1, 40), st.integers(1, 40))
def test_rationals_are_resonant(p, q):
    assert diophantine_constant([p / q], 1.0, q) < 1e-12


def test_resonant_frequency_is_rejected():
    with pytest.raises(PreconditionError):
        certify_diophantine([0.5])
    with pytest.raises(PreconditionError):
        certify_diophantine("bronze")


def test_standard_map_newton_is_quadratic():
    F = standard_map(0.1)
    out = solve_invariance(F, initial_embedding(GOLDEN, GOLDEN, 64), tol=1e-12)
    assert out.residual < 1e-12
    assert len(out.history) - 1 <= 8
    assert min(newton_orders(out.history)) > 1.5
    assert np.max(np.abs(invariance_error(F, out.embedding, out.embedding.omega))) < 1e-12


def test_integrable_map_torus_is_exact():
    out = solve_invariance(standard_map(0.0), initial_embedding(GOLDEN, GOLDEN, 16))
    assert out.residual < 1e-14
    assert np.allclose(out.embedding.v, GOLDEN) and np.allclose(out.embedding.u, 0.0)


def test_rational_rotation_hits_a_small_divisor():
    with pytest.raises(SmallDivisorError):
        solve_invariance(standard_map(0.1), initial_embedding(0.5, 0.5, 32))


def test_euler_composition_on_linear_shear_is_exact():
    out = euler_composition_error(lambda w, e: w + e * np.array([w[1], 0.0]),
                                  lambda z, t: np.array([z[0] + t * z[1], z[1]]),
                                  [0.25, 0.375], 1.0, [2.0 ** -k for k in range(4, 8)])
    assert max(out["errors"]) == 0.0


def test_euler_composition_is_first_order_for_a_linear_oscillator():
    def exact(z, t):
        c, s = math.cos(t), math.sin(t)
        return np.array([c * z[0] + s * z[1], -s * z[0] + c * z[1]])

    out = euler_composition_error(lambda w, e: w + e * np.array([w[1], -w[0]]), exact,
                                  [1.0, 0.0], 1.0, [2.0 ** -k for k in range(8, 12)])
    assert abs(out["slope"] - 1.0) < 0.05


def test_non_flat_twist_is_reported_with_data():
    H = build("metric1d")
    torus = build_torus(H, 1.0, [1], grid=32)
    with pytest.raises(NonFlatTwistError) as info:
        extract_twist(H, torus)
    assert info.value.info["theta_defect"] > 0.1
    nf = extract_twist(H, torus, require_flat=False)
    assert nf.min_eigenvalue > 0 and nf.B_defect < 1e-5


def test_flat_twist_is_the_period():
    torus = build_torus(build("flat", 2), 2.0, [1, 0], grid=8)
    nf = extract_twist(build("flat", 2), torus)
    assert np.allclose(nf.A_bar, 2.0 * np.eye(2))


def _pendulum_zero_section(grid=8):
    shape = (grid, 1)
    return PeriodicTorusData(1.0, np.array([0]), grid, np.zeros(shape), np.zeros(shape),
                             np.zeros(grid))


def test_conjugate_points_violate_the_rescaling_hypothesis():
    H = build("pendulum")
    torus = _pendulum_zero_section()
    with pytest.raises(HypothesisViolated):
        rescaled_map(H, torus, 0.1, extra_points=[([0.5], [0.0])])
    phi = rescaled_map(H, torus, 0.1, strict=False, extra_points=[([0.5], [0.0])])
    assert phi.hypothesis_violated


def test_rescaled_map_jacobian_matches_differences():
    H = build("convex-flat")
    torus = build_torus(H, 1.0, [1], grid=16)
    phi = rescaled_map(H, torus, 0.25)
    th, I = np.array([[0.2]]), np.array([[0.3]])
    _, _, J = phi(th, I, jacobian=True)
    d = 1e-6
    cols = []
    for dth, dI in [(d, 0.0), (0.0, d)]:
        a = phi(th + dth, I + dI)
        b = phi(th - dth, I - dI)
        cols.append(np.concatenate([a[0] - b[0], a[1] - b[1]], axis=1)[0] / (2 * d))
    assert np.allclose(J[0], np.column_stack(cols), atol=1e-6)


def test_family_distance_scales_like_inverse_m():
    H = build("convex-flat")
    torus = build_torus(H, 1.0, [1], grid=32)
    members = torus_family(H, torus, NAMED_FREQUENCIES["golden"], [8, 16, 32], grid=32)
    assert all(m.residual < 1e-10 for m in members)
    _, dev = fit_inverse_m(members)
    assert dev < 0.2
