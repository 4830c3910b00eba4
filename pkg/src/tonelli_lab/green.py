"""Jacobi fields along orbits: conjugate points, Green bundles, Lyapunov spectra.

A Lagrangian plane transverse to the vertical is stored as the symmetric
matrix S of the graph dp = S dx. Planes close to vertical fall back to an
orthonormal frame representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidPlaneError, PreconditionError
from .integrators import IntegratorSpec, Stepper, _as_arrays, _step_count, integrate, vertical_frame

FRAME_MARGIN = 1e-6


@dataclass
class LagrangianPlane:
    S: np.ndarray = None
    frame: np.ndarray = None
    margin: float = 1.0
    symmetry_defect: float = 0.0

    @classmethod
    def from_frame(cls, frame, sym_tol=1e-8):
        """Plane spanned by the columns of a (2n, n) frame."""
        frame = np.asarray(frame, float)
        n = frame.shape[1]
        q, _ = np.linalg.qr(frame)
        omega = q[:n].T @ q[n:] - q[n:].T @ q[:n]
        if np.max(np.abs(omega)) > sym_tol:
            raise InvalidPlaneError("frame does not span a Lagrangian plane",
                                    defect=float(np.max(np.abs(omega))))
        x = q[:n]
        margin = float(np.linalg.svd(x, compute_uv=False).min())
        if margin < FRAME_MARGIN:
            return cls(S=None, frame=q, margin=margin)
        s = np.linalg.solve(x.T, q[n:].T).T
        defect = float(np.max(np.abs(s - s.T)))
        return cls(S=0.5 * (s + s.T), frame=q, margin=margin, symmetry_defect=defect)

    @property
    def is_graph(self):
        return self.S is not None


def _transport_vertical(H, z, t, spec, renorm_every):
    """Push the vertical plane at phi_{-t}(z) forward to z; t may be negative."""
    x, p = _as_arrays(z)
    x, p = np.atleast_2d(x), np.atleast_2d(p)
    n = x.shape[-1]
    x0, p0, _, _ = integrate(H, x, p, -t, spec)
    _, _, fr, _ = integrate(H, x0, p0, t, spec, frame=vertical_frame(n, 1),
                            renorm_every=renorm_every)
    return fr[0]


@dataclass
class GreenBundle:
    plane: LagrangianPlane     # plane at the largest horizon
    limit: np.ndarray          # best estimate of the limit matrix
    horizons: list
    matrices: list
    increments: list
    extrapolated_increment: float
    rate_ratio: float
    converged: bool
    mode: str
    monotone: bool
    sign: int
    diagnostics: dict = field(default_factory=dict)


def _green(H, z, horizon, sign, spec, levels, tol, renorm_every):
    if horizon <= 0:
        raise PreconditionError("horizon must be positive")
    spec = spec or IntegratorSpec(h=1e-3)
    horizons = [horizon / 2 ** k for k in range(levels - 1, -1, -1)]
    planes = [LagrangianPlane.from_frame(_transport_vertical(H, z, sign * t, spec, renorm_every))
              for t in horizons]
    if not all(pl.is_graph for pl in planes):
        bad = [t for t, pl in zip(horizons, planes) if not pl.is_graph]
        plane = planes[-1]
        return GreenBundle(plane, None, horizons, [pl.S for pl in planes], [], np.inf, np.nan,
                           False, "frame", False, sign, {"non_graph_horizons": bad})
    mats = [pl.S for pl in planes]
    incs = [float(np.max(np.abs(b - a))) for a, b in zip(mats[:-1], mats[1:])]
    ext = [2 * b - a for a, b in zip(mats[:-1], mats[1:])]
    ext_inc = float(np.max(np.abs(ext[-1] - ext[-2]))) if len(ext) > 1 else np.inf
    ratio = incs[-2] / incs[-1] if len(incs) > 1 and incs[-1] > 0 else np.inf
    # S_+ decreases and S_- increases with the horizon
    mono = all(np.linalg.eigvalsh(sign * (a - b)).min() >= -1e-8
               for a, b in zip(mats[:-1], mats[1:]))
    if incs[-1] < tol:
        mode, limit, converged = "direct", mats[-1], True
    elif ext_inc < tol:
        mode, limit, converged = "extrapolated", ext[-1], True
    else:
        mode, limit, converged = "unconverged", ext[-1], False
    diag = {"symmetry_defect": max(pl.symmetry_defect for pl in planes),
            "min_margin": min(pl.margin for pl in planes)}
    return GreenBundle(planes[-1], limit, horizons, mats, incs, ext_inc, ratio, converged,
                       mode, mono, sign, diag)


def green_plus(H, z, horizon, spec=None, levels=4, tol=1e-8, renorm_every=50):
    """Forward Green bundle G+ at z from vertical planes pushed forward.

    The vertical plane at phi_{-t}(z) is transported to z for the horizons
    horizon/2^k. A direct Cauchy increment below ``tol`` gives the limit; for
    parabolic orbits, where S(t) approaches its limit like 1/t, the
    Richardson value 2 S(t) - S(t/2) is used when its own increment is
    below ``tol``.
    """
    return _green(H, z, horizon, +1, spec, levels, tol, renorm_every)


def green_minus(H, z, horizon, spec=None, levels=4, tol=1e-8, renorm_every=50):
    """Backward Green bundle G- at z (vertical planes pulled back)."""
    return _green(H, z, horizon, -1, spec, levels, tol, renorm_every)


def green_order_gap(g_minus, g_plus):
    """Smallest eigenvalue of S+ - S-; non-negative when S- <= S+."""
    return float(np.linalg.eigvalsh(g_plus.limit - g_minus.limit).min())


def green_intersection_dim(g_minus, g_plus, tol=1e-6):
    """dim(G- cap G+) = n - rank(S+ - S-)."""
    d = g_plus.limit - g_minus.limit
    d = 0.5 * (d + d.T)
    ev = np.abs(np.linalg.eigvalsh(d))
    return int(np.sum(ev <= tol))


# ---------------------------------------------------------------------------
# conjugate points


@dataclass
class ConjugateReport:
    times: list
    near_zeros: list
    t_max: float
    steps: int


def _vertical_measure(frame, n):
    q, r = np.linalg.qr(frame)
    # keep the orientation of the unnormalized frame
    q = q * np.sign(np.diagonal(r, axis1=-2, axis2=-1))[..., None, :]
    return float(np.linalg.det(q[..., :n, :])), q


def conjugate_scan(H, z, t_max, spec=None, near_tol=1e-8):
    """Times in (0, t_max] where the vertical at z meets the vertical again.

    The signed volume det(dx-block) of the QR-orthonormalized transported
    vertical frame is tracked step by step; sign changes are refined by
    bisection on partial steps down to 1e-3 of the step. Local minima of
    its modulus below ``near_tol`` without a sign change are reported as
    tangential near-zeros.
    """
    spec = spec or IntegratorSpec(h=1e-3)
    x, p = _as_arrays(z)
    x, p = np.atleast_2d(x).copy(), np.atleast_2d(p).copy()
    n = x.shape[-1]
    stepper = Stepper(H, spec)
    steps = _step_count(t_max, spec.h)
    h = t_max / steps
    frame = vertical_frame(n, 1)
    times, near = [], []
    prev_m, prev_prev_m = None, None
    for k in range(steps):
        x1, p1, f1 = stepper.tangent_step(x, p, frame, h)
        m1, q1 = _vertical_measure(f1[0], n)
        if prev_m is not None and np.sign(m1) != np.sign(prev_m) and m1 != 0:
            lo, hi = 0.0, h
            mlo = prev_m
            while hi - lo > 1e-3 * h:
                mid = 0.5 * (lo + hi)
                _, _, fm = stepper.tangent_step(x, p, frame, mid)
                mm, _ = _vertical_measure(fm[0], n)
                if np.sign(mm) == np.sign(mlo):
                    lo, mlo = mid, mm
                else:
                    hi = mid
            times.append(k * h + 0.5 * (lo + hi))
        elif prev_prev_m is not None and abs(prev_m) < near_tol and \
                abs(prev_m) <= abs(m1) and abs(prev_m) <= abs(prev_prev_m):
            near.append(k * h)
        prev_prev_m, prev_m = prev_m, m1
        x, p, frame = x1, p1, q1[None]
    return ConjugateReport(times, near, float(t_max), steps)


# ---------------------------------------------------------------------------
# Lyapunov spectrum


@dataclass
class LyapunovReport:
    exponents: np.ndarray
    horizon: float
    zero_count: int
    threshold: float
    pairing_defect: float
    raw: np.ndarray = None


def lyapunov_spectrum(H, z, horizon, spec=None, renorm_every=10):
    """Full Lyapunov spectrum by QR (Benettin) renormalization.

    The initial frame is the identity in (dx, dp) order. The accumulated
    log-stretch of each column is sampled at every renormalization and the
    exponent is its least-squares slope in time; ``raw`` holds the plain
    endpoint averages. The slope removes the log(t)/t bias that polynomial
    (parabolic) growth leaves in the endpoint average. Exponents with
    modulus below max(1e-3, 5 / horizon) count as zero.
    """
    if horizon <= 0:
        raise PreconditionError("horizon must be positive")
    spec = spec or IntegratorSpec(h=1e-2)
    x, p = _as_arrays(z)
    x, p = np.atleast_2d(x).copy(), np.atleast_2d(p).copy()
    n = x.shape[-1]
    stepper = Stepper(H, spec)
    steps = _step_count(horizon, spec.h)
    h = horizon / steps
    frame = np.eye(2 * n)[None]
    total = np.zeros(2 * n)
    samples, times = [np.zeros(2 * n)], [0.0]
    for k in range(1, steps + 1):
        x, p, frame = stepper.tangent_step(x, p, frame, h)
        if k % renorm_every == 0 or k == steps:
            q, r = np.linalg.qr(frame[0])
            d = np.diagonal(r)
            frame = (q * np.sign(d))[None]
            total = total + np.log(np.abs(d))
            samples.append(total.copy())
            times.append(k * h)
    samples = np.array(samples)
    times = np.array(times)
    tc = times - times.mean()
    slope = tc @ (samples - samples.mean(axis=0)) / (tc @ tc)
    raw = total / horizon
    order = np.argsort(-slope)
    lam = slope[order]
    thr = max(1e-3, 5.0 / horizon)
    pairing = float(np.max(np.abs(lam + lam[::-1])))
    return LyapunovReport(lam, float(horizon), int(np.sum(np.abs(lam) < thr)), thr, pairing,
                          raw[order])
