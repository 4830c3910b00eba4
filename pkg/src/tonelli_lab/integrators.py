"""Symplectic integration of Hamiltonian flows and their tangent lifts.

Two schemes are provided: Stormer-Verlet (kick-drift-kick) for separable
models and the implicit midpoint rule for everything else. Both are
symmetric, so running a flow backwards retraces it up to round-off. The
tangent lift is the exact derivative of the discrete map, which keeps it
symplectic at the discrete level.

Array conventions: positions ``x`` and momenta ``p`` have shape ``(B, n)``,
tangent frames have shape ``(B, 2n, k)`` with rows ordered (dx, dp).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError, PreconditionError, StepFailure
from .hamiltonians import CotangentState, LiftedState


@dataclass(frozen=True)
class IntegratorSpec:
    scheme: str = "auto"
    h: float = 1e-3
    tol: float = 1e-14
    max_iter: int = 50

    def __post_init__(self):
        if self.scheme not in ("auto", "verlet", "midpoint"):
            raise PreconditionError(f"unknown scheme {self.scheme!r}")
        if not self.h > 0:
            raise PreconditionError("step size must be positive")

    def resolve(self, H):
        if self.scheme == "auto":
            return "verlet" if H.separable is not None else "midpoint"
        if self.scheme == "verlet" and H.separable is None:
            raise PreconditionError("Stormer-Verlet needs a separable Hamiltonian")
        return self.scheme


@dataclass
class TangentFrame:
    """Columns of ``vectors`` span a subspace of the tangent space at ``base``.

    ``log_scale`` accumulates the log of the factors removed by
    renormalization, one entry per column.
    """

    base: LiftedState
    vectors: np.ndarray
    log_scale: np.ndarray = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, float)
        if self.log_scale is None:
            self.log_scale = np.zeros(self.vectors.shape[:-2] + self.vectors.shape[-1:])


def vertical_frame(n, batch=None):
    """Frame spanning the vertical subspace {dx = 0}."""
    v = np.zeros((2 * n, n))
    v[n:, :] = np.eye(n)
    if batch is None:
        return v
    return np.broadcast_to(v, (batch, 2 * n, n)).copy()


def _as_arrays(state):
    if isinstance(state, (LiftedState, CotangentState)):
        x = state.x if isinstance(state, LiftedState) else state.theta
        return np.asarray(x, float), np.asarray(state.p, float)
    x, p = state
    return np.asarray(x, float), np.asarray(p, float)


def vector_field(H, state):
    """Hamiltonian vector field (dH/dp, -dH/dx) at a state."""
    x, p = _as_arrays(state)
    hx, hp = H.gradients(x, p)
    return hp, -hx


def field_jacobian(H, x, p):
    """Derivative of the vector field, shape (..., 2n, 2n)."""
    hxx, hxp, hpp = H.hessians(x, p)
    n = x.shape[-1]
    a = np.empty(x.shape[:-1] + (2 * n, 2 * n))
    a[..., :n, :n] = np.swapaxes(hxp, -1, -2)
    a[..., :n, n:] = hpp
    a[..., n:, :n] = -hxx
    a[..., n:, n:] = -hxp
    return a


class Stepper:
    """One-step maps of a scheme; ``h`` may be negative."""

    def __init__(self, H, spec):
        self.H = H
        self.spec = spec
        self.scheme = spec.resolve(H)

    def step(self, x, p, h):
        if self.scheme == "verlet":
            return self._verlet(x, p, h)
        return self._midpoint(x, p, h)[:2]

    def tangent_step(self, x, p, frame, h):
        if self.scheme == "verlet":
            return self._verlet(x, p, h, frame)
        x1, p1, zm = self._midpoint(x, p, h)
        n = x.shape[-1]
        a = 0.5 * h * field_jacobian(self.H, zm[..., :n], zm[..., n:])
        eye = np.eye(2 * n)
        rhs = frame + a @ frame
        return x1, p1, np.linalg.solve(eye - a, rhs)

    def _verlet(self, x, p, h, frame=None):
        sep = self.H.separable
        fx = sep.potential_grad(x)
        ph = p - 0.5 * h * fx
        x1 = x + h * sep.kinetic_grad(ph)
        fx1 = sep.potential_grad(x1)
        p1 = ph - 0.5 * h * fx1
        if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(p1))):
            raise EvaluationError("non-finite state during Verlet step")
        if frame is None:
            return x1, p1
        n = x.shape[-1]
        dx, dp = frame[..., :n, :], frame[..., n:, :]
        dph = dp - 0.5 * h * (sep.potential_hess(x) @ dx)
        dx1 = dx + h * (sep.kinetic_hess(ph) @ dph)
        dp1 = dph - 0.5 * h * (sep.potential_hess(x1) @ dx1)
        return x1, p1, np.concatenate([dx1, dp1], axis=-2)

    def _midpoint(self, x, p, h):
        H = self.H
        n = x.shape[-1]
        z0 = np.concatenate([x, p], axis=-1)

        def field(z):
            hx, hp = H.gradients(z[..., :n], z[..., n:])
            return np.concatenate([hp, -hx], axis=-1)

        delta = h * field(z0)
        jac = np.eye(2 * n) - 0.5 * h * field_jacobian(H, z0[..., :n] + 0.5 * delta[..., :n],
                                                        z0[..., n:] + 0.5 * delta[..., n:])
        scale = 1.0 + float(np.max(np.abs(z0))) * abs(h)
        tol = self.spec.tol * scale
        prev = np.inf
        for it in range(self.spec.max_iter):
            res = delta - h * field(z0 + 0.5 * delta)
            corr = np.linalg.solve(jac, res[..., None])[..., 0]
            delta = delta - corr
            size = float(np.max(np.abs(corr)))
            if size <= tol:
                break
            if size >= prev and size < 1e3 * tol:
                break  # round-off floor
            prev = size
        else:
            raise StepFailure("implicit midpoint iteration did not converge; reduce h",
                              h=h, correction=size)
        z1 = z0 + delta
        if not np.all(np.isfinite(z1)):
            raise EvaluationError("non-finite state during midpoint step")
        return z1[..., :n], z1[..., n:], z0 + 0.5 * delta


def _step_count(t, h):
    steps = int(math.ceil(abs(t) / h - 1e-9))
    return max(steps, 1 if t != 0 else 0)


def integrate(H, x, p, t, spec=None, frame=None, renorm_every=None):
    """Integrate arrays (x, p) of shape (B, n) over time t.

    When ``frame`` is given it is transported by the tangent lift. With
    ``renorm_every`` set, the frame is QR-orthonormalized every that many
    steps and the log of the removed diagonal is returned as ``log_scale``.
    Returns (x, p, frame, log_scale).
    """
    spec = spec or IntegratorSpec()
    stepper = Stepper(H, spec)
    x = np.array(x, float)
    p = np.array(p, float)
    steps = _step_count(t, spec.h)
    if steps == 0:
        return x, p, frame, None
    h = t / steps
    log_scale = None
    if frame is None:
        for _ in range(steps):
            x, p = stepper.step(x, p, h)
        return x, p, None, None
    frame = np.array(frame, float)
    log_scale = np.zeros(frame.shape[:-2] + frame.shape[-1:])
    for k in range(1, steps + 1):
        x, p, frame = stepper.tangent_step(x, p, frame, h)
        if renorm_every and (k % renorm_every == 0 or k == steps):
            frame, r = np.linalg.qr(frame)
            d = np.diagonal(r, axis1=-2, axis2=-1)
            frame = frame * np.sign(d)[..., None, :]
            log_scale += np.log(np.abs(d))
    return x, p, frame, log_scale


def flow(H, state, t, spec=None):
    """Time-t map of the lifted flow."""
    x, p = _as_arrays(state)
    squeeze = x.ndim == 1
    x1, p1, _, _ = integrate(H, np.atleast_2d(x), np.atleast_2d(p), t, spec)
    if squeeze:
        x1, p1 = x1[0], p1[0]
    return LiftedState(x1, p1)


def tangent_flow(H, state, t, frame=None, spec=None):
    """Time-t map together with the transported frame (default: identity)."""
    x, p = _as_arrays(state)
    n = x.shape[-1]
    squeeze = x.ndim == 1
    xb, pb = np.atleast_2d(x), np.atleast_2d(p)
    if frame is None:
        frame = np.eye(2 * n)
    fr = np.broadcast_to(frame, (xb.shape[0],) + np.shape(frame)[-2:])
    x1, p1, f1, _ = integrate(H, xb, pb, t, spec, frame=fr)
    if squeeze:
        x1, p1, f1 = x1[0], p1[0], f1[0]
    return TangentFrame(LiftedState(x1, p1), f1)
