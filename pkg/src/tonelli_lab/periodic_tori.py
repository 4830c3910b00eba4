"""Tori of periodic orbits with prescribed period and homology.

For a period T and integer vector r, the torus is made of the orbits
through (theta, P(theta)) with x(T) = theta + r. The momentum section P is
found by Newton's method on the closure residual, node by node on a grid,
and then interpolated spectrally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fourier
from .action import _initial_paths, minimize_paths, start_offsets, time_grid
from .errors import PreconditionError, SymplecticConsistencyError, TorusConstructionError
from .hamiltonians import legendre
from .integrators import IntegratorSpec, Stepper, _step_count, integrate, vertical_frame


@dataclass
class PeriodicTorusData:
    T: float
    r: np.ndarray
    grid: int
    X: np.ndarray                 # velocity section, shape (grid,)*n + (n,)
    P: np.ndarray                 # momentum section, same shape
    action_per_orbit: np.ndarray  # shape (grid,)*n
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.r)

    @property
    def c(self):
        return fourier.mean(self.P, self.n)

    def section(self, theta):
        return fourier.evaluate(self.P, self.n, np.mod(theta, 1.0))

    def nodes(self):
        return fourier.grid_points(self.grid, self.n)

    def to_dict(self):
        return {"T": self.T, "r": self.r.tolist(), "grid": self.grid, "c": self.c.tolist(),
                "action": float(np.mean(self.action_per_orbit)),
                "sections": {"X": self.X.tolist(), "P": self.P.tolist()},
                "residuals": {k: v for k, v in self.diagnostics.items()
                              if isinstance(v, (int, float, bool))}}

    @classmethod
    def from_dict(cls, data):
        r = np.asarray(data["r"], int)
        P = np.asarray(data["sections"]["P"], float)
        X = np.asarray(data["sections"]["X"], float)
        grid = int(data["grid"])
        act = np.full(P.shape[:-1], float(data.get("action", np.nan)))
        return cls(float(data["T"]), r, grid, X, P, act, dict(data.get("residuals", {})))


def default_spec(H, h=None):
    if h is None:
        h = 1e-2 if H.separable is not None else 1.25e-4
    return IntegratorSpec(h=h)


def _orbit_action(H, x, p, T, spec):
    """Flow a batch over [0, T] and integrate L = p.dH/dp - H by trapezoid.

    For closed orbits the integrand is T-periodic, so the trapezoid rule
    is spectrally accurate in the number of steps.
    """
    stepper = Stepper(H, spec)
    steps = _step_count(T, spec.h)
    h = T / steps

    def lag(x, p):
        return np.sum(p * H.gradients(x, p)[1], axis=-1) - H(x, p)

    total = 0.5 * lag(x, p)
    for _ in range(steps):
        x, p = stepper.step(x, p, h)
        total = total + lag(x, p)
    total = total - 0.5 * lag(x, p)
    return x, p, h * total


def _newton_sections(H, theta, p, T, r, spec, tol, max_iter):
    n = H.n
    p = np.array(p, float)
    done = np.zeros(len(theta), bool)
    err = np.full(len(theta), np.inf)
    for it in range(max_iter):
        act = ~done
        if not act.any():
            break
        xt, _, fr, _ = integrate(H, theta[act], p[act], T, spec, frame=vertical_frame(n, act.sum()))
        res = xt - theta[act] - r
        e = np.max(np.abs(res), axis=1)
        err[act] = e
        conv = e < tol
        idx = np.nonzero(act)[0]
        done[idx[conv]] = True
        upd = ~conv
        if not upd.any():
            break
        try:
            dp = -np.linalg.solve(fr[upd, :n, :], res[upd][..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
        size = np.max(np.abs(dp), axis=1, keepdims=True)
        dp = dp * np.minimum(1.0, 0.5 / np.maximum(size, 1e-300))
        p[idx[upd]] += dp
    return p, done, err


def build_torus(H, T, r, grid=32, spec=None, tol=1e-12, max_newton=40,
                lagrangian_tol=1e-6, strict=True):
    """Construct the torus of T-periodic orbits with homology r.

    Newton is seeded at every node with the Legendre image of the average
    velocity r / T; nodes that fail are retried in row-major order seeded
    from the preceding solved node. ``strict`` raises when the momentum
    section is not Lagrangian within ``lagrangian_tol``.
    """
    if T <= 0:
        raise PreconditionError("period must be positive")
    n = H.n
    r = np.asarray(np.atleast_1d(r), int)
    if r.shape != (n,):
        raise PreconditionError("homology vector has the wrong dimension")
    spec = spec or default_spec(H)
    theta = fourier.grid_points(grid, n)
    seed = legendre(H, theta, np.broadcast_to(r / T, theta.shape))
    p, done, err = _newton_sections(H, theta, seed, T, r, spec, tol, max_newton)
    continued = 0
    for k in range(len(theta)):
        if done[k]:
            continue
        prev = k - 1
        while prev >= 0 and not done[prev]:
            prev -= 1
        if prev < 0:
            continue
        pk, ok, ek = _newton_sections(H, theta[k:k + 1], p[prev:prev + 1], T, r, spec,
                                      tol, max_newton)
        continued += 1
        if ok[0]:
            p[k], done[k], err[k] = pk[0], True, ek[0]
    if not done.all():
        bad = np.nonzero(~done)[0]
        raise TorusConstructionError("closure Newton failed", nodes=bad.tolist(),
                                     residual=float(err[bad].max()))

    xt, pt, action = _orbit_action(H, theta, p, T, spec)
    P = fourier.to_grid(p, grid, n)
    X = fourier.to_grid(H.gradients(theta, p)[1], grid, n)
    diag = {
        "closure": float(np.max(np.abs(xt - theta - r))),
        "fixedness": float(np.max(np.abs(pt - p))),
        "action_spread": float(np.ptp(action)),
        "winding_ok": bool(np.all(np.round(xt - theta).astype(int) == r)),
        "continued_nodes": continued,
        "newton_residual": float(err.max()),
    }
    dP = fourier.gradient(P, n)  # dP[..., i, a] = d P_i / d theta_a
    diag["lagrangian_defect"] = float(np.max(np.abs(dP - np.swapaxes(dP, -1, -2))))
    torus = PeriodicTorusData(float(T), r, grid, X, P, fourier.to_grid(action, grid, n), diag)
    for frac in (0.25, 0.5):
        x1, p1, _, _ = integrate(H, theta, p, frac * T, spec)
        diag[f"invariance_{frac}T"] = float(np.max(np.abs(p1 - torus.section(x1))))
    if strict and diag["lagrangian_defect"] > lagrangian_tol:
        raise SymplecticConsistencyError("momentum section is not Lagrangian", **diag)
    return torus


def zero_class_check(H, T, grid=32, spec=None):
    """Torus of contractible T-periodic orbits and its velocity size."""
    torus = build_torus(H, T, np.zeros(H.n, int), grid, spec)
    return {"torus": torus, "sup_velocity": float(np.max(np.abs(torus.X))),
            "c": torus.c}


def cohomology_class_of(torus):
    return torus.c


def period_action_profile(H, T, r, grid=16, dt=None, tol=1e-10, chunk=64):
    """A_T(theta, theta + r) on a grid of base points via action minimization."""
    n = H.n
    r = np.asarray(np.atleast_1d(r), float)
    theta = fourier.grid_points(grid, n)
    times = time_grid(T, dt)
    offsets = start_offsets(n)
    values = np.empty(len(theta))
    residual = np.empty(len(theta))
    for lo in range(0, len(theta), chunk):
        block = theta[lo:lo + chunk]
        q0 = np.concatenate([_initial_paths(x, x + r, times, offsets) for x in block])
        q, S, res, conv, _ = minimize_paths(H, q0, times, tol=tol)
        S = np.where(conv, S, np.inf).reshape(len(block), len(offsets))
        k = np.argmin(S, axis=1)
        values[lo:lo + len(block)] = S[np.arange(len(block)), k]
        residual[lo:lo + len(block)] = res.reshape(len(block), -1)[np.arange(len(block)), k]
    return {"theta": theta, "values": fourier.to_grid(values, grid, n),
            "spread": float(np.ptp(values)), "max_residual": float(residual.max())}
