"""Discrete Lagrangian action, fixed-endpoint minimizers and their checks.

Paths are discretized on a time grid t_0 < ... < t_N and the action is the
sum of trapezoidal discrete Lagrangians

    L_d(q0, q1; h) = h/2 * (L(q0, v) + L(q1, v)),   v = (q1 - q0) / h.

For separable mechanical systems the discrete Euler-Lagrange equations of
this L_d are exactly the Stormer-Verlet scheme. Because the discrete action
is additive under concatenation of grids, the discrete triangle inequality
holds exactly (up to optimizer tolerance) whenever the split time lies on
the grid, which is how ``check_triangle`` builds its grids.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, solveh_banded

from .errors import NoMinimizerError, PreconditionError
from .hamiltonians import inv_small, lagrangian, lagrangian_derivatives, legendre
from .integrators import IntegratorSpec, integrate

log = logging.getLogger(__name__)

T_MIN = 0.05
_trapezoid = getattr(np, "trapezoid", None) or np.trapz
DEFAULT_RATE = 128  # time steps per unit time
MIN_STEPS = 16


@dataclass
class DiscretePath:
    times: np.ndarray      # (N+1,)
    nodes: np.ndarray      # (N+1, n) lifted positions
    velocities: np.ndarray  # (N+1, n)
    momenta: np.ndarray = None

    @property
    def duration(self):
        return float(self.times[-1] - self.times[0])

    def to_records(self):
        return [{"t": float(t), "x": x.tolist(), "v": v.tolist()}
                for t, x, v in zip(self.times, self.nodes, self.velocities)]


@dataclass
class ActionResult:
    value: float
    path: DiscretePath
    converged: bool
    gradient_norm: float
    ties: int = 0
    starts: list = field(default_factory=list)


def time_grid(t, dt=None, steps=None):
    """Uniform grid on [0, t]."""
    if steps is None:
        dt = 1.0 / DEFAULT_RATE if dt is None else dt
        steps = max(MIN_STEPS, int(np.ceil(t / dt - 1e-9)))
    return np.linspace(0.0, t, steps + 1)


# ---------------------------------------------------------------------------
# discrete action and its derivatives


def _segments(q, times):
    h = np.diff(times)                       # (N,)
    v = np.diff(q, axis=-2) / h[:, None]     # (..., N, n)
    return h, v


def discrete_action(H, q, times):
    """Discrete action of node arrays q of shape (..., N+1, n)."""
    h, v = _segments(q, times)
    la = lagrangian(H, q[..., :-1, :], v)
    lb = lagrangian(H, q[..., 1:, :], v)
    return np.sum(0.5 * h * (la + lb), axis=-1)


def _derivatives(H, q, times):
    """Action, interior gradient, Hessian blocks and discrete momenta.

    Returns S (...), grad (..., N-1, n), diag (..., N-1, n, n),
    upper (..., N-2, n, n) and momenta (..., N+1, n).
    """
    h, v = _segments(q, times)
    qa = q[..., :-1, :]
    qb = q[..., 1:, :]
    both_q = np.stack([qa, qb])
    both_v = np.stack([v, v])
    L, Lx, Lv, Lxx, Lxv, Lvv = lagrangian_derivatives(H, both_q, both_v)
    hh = h[:, None]
    S = np.sum(0.5 * h * (L[0] + L[1]), axis=-1)
    mean_p = 0.5 * (Lv[0] + Lv[1])
    d1 = 0.5 * hh * Lx[0] - mean_p
    d2 = 0.5 * hh * Lx[1] + mean_p
    grad = d2[..., :-1, :] + d1[..., 1:, :]

    h3 = h[:, None, None]
    lvx = np.swapaxes(Lxv, -1, -2)
    vv = (Lvv[0] + Lvv[1]) / (2 * h3)
    d11 = 0.5 * h3 * Lxx[0] - 0.5 * (Lxv[0] + lvx[0]) + vv
    d12 = 0.5 * Lxv[0] - 0.5 * lvx[1] - vv
    d22 = 0.5 * h3 * Lxx[1] + 0.5 * (Lxv[1] + lvx[1]) + vv
    diag = d22[..., :-1, :, :] + d11[..., 1:, :, :]
    upper = d12[..., 1:-1, :, :]

    momenta = np.concatenate([-d1[..., :1, :], d2], axis=-2)
    return S, grad, diag, upper, momenta


# ---------------------------------------------------------------------------
# symmetric block-tridiagonal solves


def _solve_batched(diag, upper, rhs):
    """Block LDL^T solve over a batch; returns (x, positive_definite mask)."""
    with np.errstate(all="ignore"):
        return _block_ldl(diag, upper, rhs)


def _block_ldl(diag, upper, rhs):
    B, M, n, _ = diag.shape
    ok = np.ones(B, bool)
    piv = np.empty_like(diag)
    y = np.empty_like(rhs)
    piv[:, 0] = diag[:, 0]
    y[:, 0] = rhs[:, 0]
    for k in range(1, M):
        u = upper[:, k - 1]
        if n == 1:
            inv = 1.0 / piv[:, k - 1]
            coef = np.swapaxes(u, -1, -2) * inv
        else:
            coef = np.swapaxes(inv_small(piv[:, k - 1]) @ u, -1, -2)
        piv[:, k] = diag[:, k] - coef @ u
        y[:, k] = rhs[:, k] - (coef @ y[:, k - 1][..., None])[..., 0]
    if n == 1:
        ok &= np.all(piv[:, :, 0, 0] > 0, axis=1)
    else:
        finite = np.all(np.isfinite(piv), axis=(1, 2, 3))
        ok &= finite
        piv = np.where(finite[:, None, None, None], piv, np.eye(n))
        if n == 2:
            det = piv[..., 0, 0] * piv[..., 1, 1] - piv[..., 0, 1] * piv[..., 1, 0]
            ok &= np.all((piv[..., 0, 0] > 0) & (det > 0), axis=1)
        else:
            ok &= np.all(np.linalg.eigvalsh(piv)[..., 0] > 0, axis=1)
    sol = np.empty_like(rhs)
    safe = inv_small(np.where(ok[:, None, None, None], piv, np.eye(n)))
    sol[:, M - 1] = (safe[:, M - 1] @ y[:, M - 1][..., None])[..., 0]
    for k in range(M - 2, -1, -1):
        r = y[:, k] - (upper[:, k] @ sol[:, k + 1][..., None])[..., 0]
        sol[:, k] = (safe[:, k] @ r[..., None])[..., 0]
    return sol, ok


def _solve_banded(diag, upper, rhs):
    """Single problem via LAPACK banded Cholesky."""
    M, n, _ = diag.shape
    size = M * n
    bw = 2 * n - 1
    ab = np.zeros((bw + 1, size))
    for k in range(M):
        for i in range(n):
            for j in range(i, n):
                col = k * n + j
                ab[bw + i - j, col] = diag[k, i, j]
    for k in range(M - 1):
        for i in range(n):
            for j in range(n):
                row, col = k * n + i, (k + 1) * n + j
                ab[bw + row - col, col] = upper[k, i, j]
    try:
        sol = solveh_banded(ab, rhs.reshape(size), check_finite=False)
    except LinAlgError:
        return None, False
    return sol.reshape(M, n), True


def _newton_direction(diag, upper, grad, mu):
    n = diag.shape[-1]
    shifted = diag + mu[:, None, None, None] * np.eye(n)
    if diag.shape[0] == 1 and diag.shape[1] > 64:
        sol, ok = _solve_banded(shifted[0], upper[0], -grad[0])
        if not ok:
            return np.zeros_like(grad), np.array([False])
        return sol[None], np.array([True])
    return _solve_batched(shifted, upper, -grad)


def minimize_paths(H, q0, times, tol=1e-10, max_iter=200):
    """Damped Newton descent on the interior nodes of a batch of paths.

    ``q0`` has shape (B, N+1, n); endpoints stay fixed. The Hessian is
    shifted (Levenberg-Marquardt) where it is not positive definite and a
    backtracking line search enforces descent, so the iteration converges
    to local minima rather than saddles. Convergence is declared when the
    discrete Euler-Lagrange residual per unit time is below ``tol``.
    Returns (q, S, residual, converged, momenta).
    """
    q = np.array(q0, float)
    B = q.shape[0]
    h = np.diff(times)
    hmid = 0.5 * (h[:-1] + h[1:])[None, :, None]
    mu = np.zeros(B)
    S, grad, diag, upper, mom = _derivatives(H, q, times)
    scale = np.mean(np.abs(diag[..., 0, 0]), axis=1)
    res = np.max(np.abs(grad / hmid), axis=(1, 2))
    active = res > tol
    for it in range(max_iter):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        step = np.zeros((len(idx),) + grad.shape[1:])
        pending = np.ones(len(idx), bool)
        for _ in range(40):
            sub = idx[pending]
            d, ok = _newton_direction(diag[sub], upper[sub], grad[sub], mu[sub])
            where = np.nonzero(pending)[0]
            step[where[ok]] = d[ok]
            bad = sub[~ok]
            mu[bad] = np.maximum(10 * mu[bad], 1e-6 * scale[bad])
            pending[where[ok]] = False
            if not pending.any():
                break
        alpha = np.ones(len(idx))
        accepted = np.zeros(len(idx), bool)
        slope = np.sum(grad[idx] * step, axis=(1, 2))
        qi = q[idx]
        for _ in range(40):
            trial = qi.copy()
            trial[:, 1:-1] += alpha[:, None, None] * step
            st = discrete_action(H, trial, times)
            good = (st <= S[idx] + 1e-4 * alpha * slope + 1e-13 * np.abs(S[idx])) & ~accepted
            qi[good] = trial[good]
            accepted |= good
            if accepted.all():
                break
            alpha = np.where(accepted, alpha, 0.5 * alpha)
        q[idx] = qi
        mu[idx] = np.where(accepted & (alpha == 1), mu[idx] / 10, mu[idx])
        mu[mu < 1e-8 * scale] = 0.0
        stalled = idx[~accepted]
        S_i, grad_i, diag_i, upper_i, mom_i = _derivatives(H, q[idx], times)
        S[idx], grad[idx], diag[idx], upper[idx], mom[idx] = S_i, grad_i, diag_i, upper_i, mom_i
        res[idx] = np.max(np.abs(grad_i / hmid), axis=(1, 2))
        active = res > tol
        # a failed line search means we are at the round-off floor
        active[stalled] = False
    converged = res <= max(tol, 0.0) * 1e3
    return q, S, res, converged, mom


# ---------------------------------------------------------------------------
# public operations


def start_offsets(n, cap=27):
    offs = list(itertools.product((0, -1, 1), repeat=n))
    return np.array(offs[:cap], float)


def _initial_paths(x, y, times, offsets):
    s = (times - times[0]) / (times[-1] - times[0])
    base = x[None, :] + s[:, None] * (y - x)[None, :]
    bump = np.sin(np.pi * s)[:, None]
    return base[None] + offsets[:, None, :] * bump[None]


def path_from_nodes(H, q, times, momenta):
    v = H.gradients(q, momenta)[1]
    return DiscretePath(np.array(times), q, v, momenta)


def min_action(H, x, y, t, dt=None, steps=None, times=None, offsets=None, tol=1e-10,
               t_min=T_MIN):
    """Minimal discrete action from lifted x to lifted y in time t.

    Runs a multistart damped-Newton descent (one start per integer bump
    offset in {-1, 0, 1}^n, capped at 27) and keeps the lowest value. Ties
    between distinct paths are broken by the lexicographically smallest
    initial velocity and logged.
    """
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    if x.shape != (H.n,) or y.shape != (H.n,):
        raise PreconditionError("endpoints must be points of R^n")
    if times is None:
        if t < t_min:
            raise PreconditionError(f"time {t} below t_min={t_min}")
        times = time_grid(t, dt, steps)
    else:
        times = np.asarray(times, float)
        if times[-1] - times[0] < t_min:
            raise PreconditionError("time grid shorter than t_min")
    if offsets is None:
        offsets = start_offsets(H.n)
    q0 = _initial_paths(x, y, times, offsets)
    q, S, res, conv, mom = minimize_paths(H, q0, times, tol=tol)
    if not conv.any():
        raise NoMinimizerError("no start converged", residuals=res.tolist())
    cand = np.nonzero(conv)[0]
    best = cand[np.argmin(S[cand])]
    near = [i for i in cand
            if abs(S[i] - S[best]) <= 1e-10 * max(1.0, abs(S[best]))
            and np.max(np.abs(q[i] - q[best])) > 1e-6]
    ties = 0
    if near:
        group = [best] + near
        v0 = [tuple((q[i, 1] - q[i, 0]) / (times[1] - times[0])) for i in group]
        distinct = {tuple(np.round(v, 8)) for v in v0}
        ties = len(distinct) - 1
        best = group[min(range(len(group)), key=lambda j: v0[j])]
        if ties:
            log.warning("min_action: %d near-tied minimizers, keeping smallest initial velocity", ties)
    starts = [{"offset": offsets[i].tolist(), "value": float(S[i]), "residual": float(res[i]),
               "converged": bool(conv[i])} for i in range(len(offsets))]
    path = path_from_nodes(H, q[best], times, mom[best])
    return ActionResult(float(S[best]), path, bool(conv[best]), float(res[best]), ties, starts)


def action_of_path(H, path=None, times=None, nodes=None, velocities=None):
    """Trapezoidal quadrature of L along a sampled path.

    Velocities default to the path's own (integrator) velocities; pass
    ``velocities=False`` to force finite differences (symmetric inside,
    one-sided second order at the ends).
    """
    if path is not None:
        times, nodes = path.times, path.nodes
        if velocities is None:
            velocities = path.velocities
    times = np.asarray(times, float)
    nodes = np.asarray(nodes, float)
    if velocities is None or velocities is False:
        velocities = np.gradient(nodes, times, axis=0, edge_order=2)
    vals = lagrangian(H, nodes, np.asarray(velocities, float))
    return float(_trapezoid(vals, times))


def shooting_residual(H, result, spec=None):
    """Distance between the path endpoint and the Hamiltonian flow of its
    initial discrete momentum; a cross-check on the discrete extremal."""
    path = result.path
    h = float(np.min(np.diff(path.times)))
    spec = spec or IntegratorSpec(h=h)
    x1, _, _, _ = integrate(H, path.nodes[:1], path.momenta[:1], path.duration, spec)
    return float(np.max(np.abs(x1[0] - path.nodes[-1])))


@dataclass
class TriangleReport:
    lhs: float
    rhs: float
    gap: float
    witness_distance: float
    equality: bool
    witness: bool

    @property
    def consistent(self):
        return self.equality == self.witness


def check_triangle(H, x, y, z, t1, t2, dt=None, gap_tol=1e-8, witness_tol=1e-5):
    """Compare A_{t1+t2}(x, z) with A_{t1}(x, y) + A_{t2}(y, z).

    The long path uses the concatenation of the two short grids, so the
    split time t1 is a node and the node there is the witness c(t1).
    """
    g1 = time_grid(t1, dt)
    g2 = time_grid(t2, dt)
    long_grid = np.concatenate([g1, t1 + g2[1:]])
    a = min_action(H, x, y, t1, times=g1)
    b = min_action(H, y, z, t2, times=g2)
    c = min_action(H, x, z, t1 + t2, times=long_grid)
    rhs = a.value + b.value
    gap = rhs - c.value
    wd = float(np.max(np.abs(c.path.nodes[len(g1) - 1] - np.asarray(y, float))))
    return TriangleReport(c.value, rhs, gap, wd, bool(abs(gap) <= gap_tol), bool(wd <= witness_tol))


def exp_injectivity_probe(H, x, t, velocities, spec=None):
    """Injectivity of v -> pi(phi_t(x, Leg(v))) over a set of velocities.

    Reports the smallest ratio |F(v) - F(w)| / |v - w| over pairs, the
    determinant of dF/dv at each sample and whether it changes sign.
    """
    vel = np.atleast_2d(np.asarray(velocities, float))
    n = H.n
    xb = np.broadcast_to(np.asarray(x, float), vel.shape).copy()
    p = legendre(H, xb, vel)
    frame = np.zeros((len(vel), 2 * n, n))
    frame[:, n:, :] = np.eye(n)
    spec = spec or IntegratorSpec()
    xt, _, fr, _ = integrate(H, xb, p, t, spec, frame=frame)
    hpp = H.hessians(xb, p)[2]
    dfdv = fr[:, :n, :] @ np.linalg.inv(hpp)
    det = np.linalg.det(dfdv)
    diff_x = xt[:, None, :] - xt[None, :, :]
    diff_v = vel[:, None, :] - vel[None, :, :]
    dv = np.linalg.norm(diff_v, axis=-1)
    mask = dv > 0
    ratio = np.linalg.norm(diff_x, axis=-1)[mask] / dv[mask]
    return {
        "min_ratio": float(ratio.min()) if ratio.size else float("inf"),
        "min_abs_det": float(np.min(np.abs(det))),
        "det_sign_change": bool(det.min() < 0 < det.max()),
        "injective": bool(det.min() > 0 or det.max() < 0),
        "endpoints": xt,
        "det": det,
    }
