"""Tonelli Hamiltonians on the cotangent bundle of the flat torus.

Positions are lifted angles measured in turns, so every model is 1-periodic
in each position coordinate. All callables are vectorized: they accept arrays
of shape ``(..., n)`` and broadcast over the leading axes.

Second derivatives follow one convention throughout: ``H_xp[..., i, j]`` is
d^2H / dx_i dp_j.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EvaluationError, LegendreError, PreconditionError

TWO_PI = 2.0 * np.pi
CATALOGUE_VERSION = "1.0"


@dataclass(frozen=True)
class Separable:
    """Split H = K(p) + V(x) used by the Stormer-Verlet scheme."""

    kinetic_grad: Callable
    kinetic_hess: Callable
    potential_grad: Callable
    potential_hess: Callable


@dataclass(frozen=True)
class HamiltonianModel:
    name: str
    n: int
    energy: Callable
    grad: Callable
    hess: Callable
    params: dict = field(default_factory=dict)
    separable: Optional[Separable] = None
    lagrangian_fn: Optional[Callable] = None
    # characteristic momentum scale, used for finite-difference steps
    scale: float = 1.0

    def __call__(self, x, p):
        return self.energy(np.asarray(x, float), np.asarray(p, float))

    def gradients(self, x, p):
        hx, hp = self.grad(np.asarray(x, float), np.asarray(p, float))
        if not (np.all(np.isfinite(hx)) and np.all(np.isfinite(hp))):
            raise EvaluationError(f"non-finite gradient of {self.name}")
        return hx, hp

    def hessians(self, x, p):
        out = self.hess(np.asarray(x, float), np.asarray(p, float))
        if not all(np.all(np.isfinite(a)) for a in out):
            raise EvaluationError(f"non-finite Hessian of {self.name}")
        return out

    @classmethod
    def from_energy(cls, name, n, energy, params=None, scale=1.0):
        """Build a model from H alone; derivatives by central differences."""
        step = 1e-5 * scale

        def grad(x, p):
            z = np.concatenate(np.broadcast_arrays(x, p), axis=-1)
            g = _fd_grad(lambda w: energy(w[..., :n], w[..., n:]), z, step)
            return g[..., :n], g[..., n:]

        def hess(x, p):
            z = np.concatenate(np.broadcast_arrays(x, p), axis=-1)

            def flat_grad(w):
                gx, gp = grad(w[..., :n], w[..., n:])
                return np.concatenate([gx, gp], axis=-1)

            hz = _fd_jac(flat_grad, z, step)
            hz = 0.5 * (hz + np.swapaxes(hz, -1, -2))
            return hz[..., :n, :n], hz[..., :n, n:], hz[..., n:, n:]

        return cls(name=name, n=n, energy=energy, grad=grad, hess=hess,
                   params=dict(params or {}), scale=scale)


def _fd_grad(f, z, step):
    g = np.empty(z.shape)
    for k in range(z.shape[-1]):
        e = np.zeros(z.shape[-1])
        e[k] = step
        g[..., k] = (f(z + e) - f(z - e)) / (2 * step)
    return g


def _fd_jac(f, z, step):
    m = z.shape[-1]
    jac = np.empty(z.shape + (m,))
    for k in range(m):
        e = np.zeros(m)
        e[k] = step
        jac[..., :, k] = (f(z + e) - f(z - e)) / (2 * step)
    return jac


# ---------------------------------------------------------------------------
# states


@dataclass
class CotangentState:
    """A point (theta, p) with theta reduced to [0, 1)^n."""

    theta: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.theta = np.mod(np.asarray(self.theta, float), 1.0)
        self.p = np.asarray(self.p, float)
        if self.theta.shape != self.p.shape:
            raise PreconditionError("theta and p must have the same shape")


@dataclass
class LiftedState:
    """A point of the universal cover with its integer winding."""

    x: np.ndarray
    p: np.ndarray
    winding: np.ndarray = None

    def __post_init__(self):
        self.x = np.asarray(self.x, float)
        self.p = np.asarray(self.p, float)
        if self.x.shape != self.p.shape:
            raise PreconditionError("x and p must have the same shape")
        if self.winding is None:
            self.winding = np.floor(self.x).astype(int)
        else:
            self.winding = np.asarray(self.winding, int)

    @property
    def theta(self):
        return self.x - self.winding

    def project(self):
        return CotangentState(self.x, self.p)


# ---------------------------------------------------------------------------
# catalogue


def _eye(n, shape):
    return np.broadcast_to(np.eye(n), tuple(shape) + (n, n)).copy()


def _diag(d):
    out = np.zeros(d.shape + (d.shape[-1],))
    idx = np.arange(d.shape[-1])
    out[..., idx, idx] = d
    return out


def mechanical(name, n, potential, potential_grad, potential_hess, params=None,
               kinetic=None, kinetic_grad=None, kinetic_hess=None, lagrangian=None):
    """H = K(p) + V(x); K defaults to |p|^2 / 2."""
    if kinetic is None:
        kinetic = lambda p: 0.5 * np.sum(p * p, axis=-1)
        kinetic_grad = lambda p: np.array(p, float)
        kinetic_hess = lambda p: _eye(n, np.shape(p)[:-1])

        if lagrangian is None:
            def lagrangian(x, v):
                return 0.5 * np.sum(v * v, axis=-1) - potential(x)

    def energy(x, p):
        return kinetic(p) + potential(x)

    def grad(x, p):
        x, p = np.broadcast_arrays(x, p)
        return potential_grad(x), kinetic_grad(p)

    def hess(x, p):
        x, p = np.broadcast_arrays(x, p)
        return potential_hess(x), np.zeros(x.shape + (n,)), kinetic_hess(p)

    sep = Separable(kinetic_grad, kinetic_hess, potential_grad, potential_hess)
    return HamiltonianModel(name=name, n=n, energy=energy, grad=grad, hess=hess,
                            params=dict(params or {}), separable=sep,
                            lagrangian_fn=lagrangian)


def _zero_potential(n):
    return (lambda x: np.zeros(np.shape(x)[:-1]),
            lambda x: np.zeros(np.shape(x)),
            lambda x: np.zeros(np.shape(x) + (n,)))


def flat(n=1):
    """H = |p|^2 / 2."""
    v, dv, d2v = _zero_potential(n)
    return mechanical("flat", n, v, dv, d2v, params={})


def convex_flat(n=1, quartic=1.0):
    """H = sum_i (p_i^2 / 2 + quartic * p_i^4 / 4); integrable, non-quadratic."""
    q = float(quartic)
    if q < 0:
        raise PreconditionError("quartic coefficient must be non-negative")
    v, dv, d2v = _zero_potential(n)
    model = mechanical(
        "convex-flat", n, v, dv, d2v, params={"quartic": q},
        kinetic=lambda p: np.sum(0.5 * p * p + 0.25 * q * p ** 4, axis=-1),
        kinetic_grad=lambda p: p + q * p ** 3,
        kinetic_hess=lambda p: _diag(1.0 + 3.0 * q * p * p),
    )
    return model


def pendulum(amplitude=1.0):
    """H = p^2 / 2 + amplitude * cos(2 pi x) on T^1."""
    a = float(amplitude)
    return mechanical(
        "pendulum", 1,
        lambda x: a * np.cos(TWO_PI * x[..., 0]),
        lambda x: -a * TWO_PI * np.sin(TWO_PI * x),
        lambda x: (-a * TWO_PI ** 2 * np.cos(TWO_PI * x))[..., None],
        params={"amplitude": a},
    )


def mech2d(eps=0.2):
    """H = |p|^2 / 2 + eps (cos 2 pi x_1 + cos 2 pi x_2) on T^2."""
    e = float(eps)
    return mechanical(
        "mech2d", 2,
        lambda x: e * np.sum(np.cos(TWO_PI * x), axis=-1),
        lambda x: -e * TWO_PI * np.sin(TWO_PI * x),
        lambda x: _diag(-e * TWO_PI ** 2 * np.cos(TWO_PI * x)),
        params={"eps": e},
    )


def shear(n=1, c=None, a=0.3):
    """H = |p - c - grad g(x)|^2 / 2 with g(x) = a sin(2 pi x_1) / (2 pi).

    The graph p = c + grad g is an invariant Lagrangian torus of cohomology
    class c carrying the linear flow x' = 0 relative to the shifted momentum.
    """
    c = np.zeros(n) if c is None else np.asarray(c, float).reshape(n)
    a = float(a)

    def b(x):
        out = np.broadcast_to(c, np.shape(x)).copy()
        out[..., 0] += a * np.cos(TWO_PI * x[..., 0])
        return out

    def db1(x):  # derivative of b_1 in x_1
        return -a * TWO_PI * np.sin(TWO_PI * x[..., 0])

    def d2b1(x):
        return -a * TWO_PI ** 2 * np.cos(TWO_PI * x[..., 0])

    def energy(x, p):
        w = p - b(x)
        return 0.5 * np.sum(w * w, axis=-1)

    def grad(x, p):
        x, p = np.broadcast_arrays(x, p)
        w = p - b(x)
        hx = np.zeros(x.shape)
        hx[..., 0] = -w[..., 0] * db1(x)
        return hx, w

    def hess(x, p):
        x, p = np.broadcast_arrays(x, p)
        w = p - b(x)
        shape = x.shape[:-1]
        hxx = np.zeros(shape + (n, n))
        hxx[..., 0, 0] = db1(x) ** 2 - w[..., 0] * d2b1(x)
        hxp = np.zeros(shape + (n, n))
        hxp[..., 0, 0] = -db1(x)
        return hxx, hxp, _eye(n, shape)

    def lagrangian(x, v):
        return 0.5 * np.sum(v * v, axis=-1) + np.sum(b(x) * v, axis=-1)

    return HamiltonianModel(name="shear", n=n, energy=energy, grad=grad, hess=hess,
                            params={"c": c.tolist(), "a": a},
                            lagrangian_fn=lagrangian)


def shear_section(model, x):
    """Momentum section c + grad g(x) of the invariant graph of a shear model."""
    x = np.asarray(x, float)
    c = np.asarray(model.params["c"], float)
    out = np.broadcast_to(c, x.shape).copy()
    out[..., 0] += model.params["a"] * np.cos(TWO_PI * x[..., 0])
    return out


def metric1d(amplitude=0.3):
    """H = m(x) p^2 / 2 with m(x) = 1 + amplitude cos(2 pi x) on T^1.

    A Riemannian example whose twist depends on the angle; it has no
    conjugate points (1-D geodesic flow).
    """
    a = float(amplitude)
    if abs(a) >= 1:
        raise PreconditionError("metric amplitude must be below 1")

    def m(x):
        return 1.0 + a * np.cos(TWO_PI * x[..., 0])

    def energy(x, p):
        return 0.5 * m(x) * p[..., 0] ** 2

    def grad(x, p):
        x, p = np.broadcast_arrays(x, p)
        dm = -a * TWO_PI * np.sin(TWO_PI * x[..., 0])
        return (0.5 * dm * p[..., 0] ** 2)[..., None], (m(x) * p[..., 0])[..., None]

    def hess(x, p):
        x, p = np.broadcast_arrays(x, p)
        dm = -a * TWO_PI * np.sin(TWO_PI * x[..., 0])
        d2m = -a * TWO_PI ** 2 * np.cos(TWO_PI * x[..., 0])
        return ((0.5 * d2m * p[..., 0] ** 2)[..., None, None],
                (dm * p[..., 0])[..., None, None],
                m(x)[..., None, None])

    def lagrangian(x, v):
        return 0.5 * v[..., 0] ** 2 / m(x)

    return HamiltonianModel(name="metric1d", n=1, energy=energy, grad=grad, hess=hess,
                            params={"amplitude": a}, lagrangian_fn=lagrangian)


CATALOGUE = {
    "flat": flat,
    "convex-flat": convex_flat,
    "shear": shear,
    "pendulum": pendulum,
    "mech2d": mech2d,
    "metric1d": metric1d,
}

_FIXED_DIM = {"pendulum": 1, "mech2d": 2, "metric1d": 1}


def build(name, n=None, params=None):
    """Instantiate a catalogue model by key."""
    if name not in CATALOGUE:
        raise PreconditionError(f"unknown Hamiltonian {name!r}", known=sorted(CATALOGUE))
    params = dict(params or {})
    if name in _FIXED_DIM:
        if n is not None and n != _FIXED_DIM[name]:
            raise PreconditionError(f"{name} lives on T^{_FIXED_DIM[name]}")
        return CATALOGUE[name](**params)
    return CATALOGUE[name](n=1 if n is None else int(n), **params)


# ---------------------------------------------------------------------------
# Legendre transform


def inverse_legendre(H, x, p):
    """Velocity dH/dp(x, p)."""
    return H.gradients(x, p)[1]


def inv_small(m):
    """Batched inverse of (..., n, n) matrices; closed form for n <= 2."""
    n = m.shape[-1]
    if n == 1:
        return 1.0 / m
    if n == 2:
        det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
        out = np.empty_like(m)
        out[..., 0, 0] = m[..., 1, 1]
        out[..., 1, 1] = m[..., 0, 0]
        out[..., 0, 1] = -m[..., 0, 1]
        out[..., 1, 0] = -m[..., 1, 0]
        return out / det[..., None, None]
    return np.linalg.inv(m)


def legendre(H, x, v, tol=1e-13, max_iter=50):
    """Momentum p with dH/dp(x, p) = v, by Newton's method."""
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    x, v = np.broadcast_arrays(x, v)
    p = np.array(v, float)
    for it in range(max_iter):
        _, hp = H.gradients(x, p)
        r = hp - v
        err = np.max(np.abs(r)) if r.size else 0.0
        if err < tol * max(1.0, np.max(np.abs(v)) if v.size else 1.0):
            return p
        hpp = H.hessians(x, p)[2]
        p = p - (inv_small(hpp) @ r[..., None])[..., 0]
    _, hp = H.gradients(x, p)
    err = float(np.max(np.abs(hp - v)))
    if err < 1e3 * tol * max(1.0, float(np.max(np.abs(v)))):
        return p
    raise LegendreError("Legendre inversion did not converge", residual=err)


def lagrangian(H, x, v):
    """L(x, v) = p.v - H(x, p) at p = legendre(x, v)."""
    p = legendre(H, x, v)
    return np.sum(p * v, axis=-1) - H(x, p)


def lagrangian_derivatives(H, x, v):
    """L and its first and second derivatives via the Legendre transform.

    Returns (L, Lx, Lv, Lxx, Lxv, Lvv) with Lxv[..., i, j] = d^2L/dx_i dv_j.
    """
    x, v = np.broadcast_arrays(np.asarray(x, float), np.asarray(v, float))
    p = legendre(H, x, v)
    hx, _ = H.gradients(x, p)
    hxx, hxp, hpp = H.hessians(x, p)
    L = np.sum(p * v, axis=-1) - H(x, p)
    if H.separable is not None:
        inv = inv_small(hpp)
        return L, -hx, p, -hxx, np.zeros_like(hxx), inv
    if H.n == 1:
        inv = 1.0 / hpp
        lvx = -inv * np.swapaxes(hxp, -1, -2)
        lxx = -hxx + hxp * inv * np.swapaxes(hxp, -1, -2)
    else:
        inv = inv_small(hpp)
        lvx = -inv @ np.swapaxes(hxp, -1, -2)
        lxx = -hxx - hxp @ lvx
    return L, -hx, p, lxx, np.swapaxes(lvx, -1, -2), inv
