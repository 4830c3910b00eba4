import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from tonelli_lab import fourier


def _trig(theta, a, b, k):
    return a * np.cos(2 * np.pi * k * theta) + b * np.sin(2 * np.pi * k * theta)


def test_grid_points_are_row_major():
    pts = fourier.grid_points(3, 2)
    assert pts.shape == (9, 2)
    assert np.allclose(pts[1], [0.0, 1 / 3])
    assert np.allclose(pts[3], [1 / 3, 0.0])


@given(a=st.floats(-2, 2), b=st.floats(-2, 2), k=st.integers(0, 7))
def test_derivative_of_trig_polynomial(a, b, k):
    th = np.arange(16) / 16
    f = _trig(th, a, b, k)
    df = 2 * np.pi * k * (-a * np.sin(2 * np.pi * k * th) + b * np.cos(2 * np.pi * k * th))
    assert np.allclose(fourier.derivative(f, 1, 0), df, atol=1e-10)


@given(a=st.floats(-2, 2), b=st.floats(-2, 2), k=st.integers(0, 7), s=st.floats(-1, 1))
def test_shift_and_evaluate_are_exact(a, b, k, s):
    th = np.arange(16) / 16
    f = _trig(th, a, b, k)
    assert np.allclose(fourier.shift(f, 1, [s]), _trig(th + s, a, b, k), atol=1e-10)
    pts = np.array([[s % 1.0], [0.123]])
    assert np.allclose(fourier.evaluate(f, 1, pts), _trig(pts[:, 0], a, b, k), atol=1e-10)


def test_gradient_layout_in_two_dimensions():
    g = 8
    pts = fourier.grid_points(g, 2)
    P = np.stack([np.sin(2 * np.pi * pts[:, 0]) * np.cos(2 * np.pi * pts[:, 1]),
                  np.cos(2 * np.pi * pts[:, 1])], axis=-1)
    dP = fourier.gradient(fourier.to_grid(P, g, 2), 2).reshape(-1, 2, 2)
    # dP[..., i, a] = d P_i / d theta_a
    assert np.allclose(dP[:, 0, 0], 2 * np.pi * np.cos(2 * np.pi * pts[:, 0])
                       * np.cos(2 * np.pi * pts[:, 1]))
    assert np.allclose(dP[:, 1, 0], 0.0)
    assert np.allclose(dP[:, 1, 1], -2 * np.pi * np.sin(2 * np.pi * pts[:, 1]))


def test_mean_and_coefficients():
    th = np.arange(8) / 8
    f = 0.5 + np.cos(2 * np.pi * th)
    assert np.isclose(fourier.mean(f, 1), 0.5)
    c = fourier.coefficients(f, 1)
    assert np.isclose(c[1].real, 0.5) and np.isclose(c[-1].real, 0.5)
    assert np.allclose(fourier.wavenumbers(4), [0, 1, -2, -1])
