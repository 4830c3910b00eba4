"""Grid-based weak KAM solutions, critical values and Aubry set estimates.

The Lax-Oleinik operator at fixed time tau,

    (T u)(x) = min_d [ u(x - d) + A_tau(x - d, x) - c.d ],

acts on functions sampled on a uniform grid of T^n. The displacement d runs
over the grid-aligned vectors of the box [-W, W]^n (W = 1.5 covers the 3^n
nearest lifts of x - y). The fixed-time action A_tau is computed once per
Hamiltonian by batched discrete minimization and reused for every class c,
since the closed form c enters only through -c.d.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import fourier
from .action import T_MIN, minimize_paths, min_action, start_offsets
from .errors import PreconditionError

log = logging.getLogger(__name__)


@dataclass
class ActionKernel:
    """A_tau(x_i - d, x_i) for grid nodes x_i and box offsets d = j / grid."""

    tau: float
    grid: int
    n: int
    radius: int                 # offsets j in [-radius, radius]^n
    values: np.ndarray          # (grid**n, (2 radius + 1)**n)
    end_momenta: np.ndarray     # (grid**n, (2 radius + 1)**n, n)
    max_residual: float
    steps: int

    @property
    def width(self):
        return 2 * self.radius + 1

    def offsets(self):
        """Offsets in grid units, row-major over the box, shape (M, n)."""
        r = np.arange(-self.radius, self.radius + 1)
        return np.array(list(itertools.product(r, repeat=self.n)), int)

    def displacements(self):
        return self.offsets() / self.grid


def default_window(n):
    """Box half-width: all 3^n nearest lifts for n = 1, |d| <= 1 above.

    The box has (2 W grid + 1)^n offsets, so for n >= 2 the full 3^n lift
    box is costly; minimizers reaching the edge are flagged at run time
    (``ValueGrid.lift_bound_ok``).
    """
    return 1.5 if n == 1 else 1.0


def action_kernel(H, grid, tau, window=None, steps=16, chunk=16384, tol=1e-9):
    """Fixed-time discrete action between grid nodes and their box offsets."""
    if not 0.1 <= tau <= 1.0:
        raise PreconditionError("tau must lie in [0.1, 1]")
    n = H.n
    window = default_window(n) if window is None else window
    radius = int(np.ceil(window * grid - 1e-9))
    nodes = fourier.grid_points(grid, n)
    r = np.arange(-radius, radius + 1)
    offs = np.array(list(itertools.product(r, repeat=n)), float) / grid
    times = np.linspace(0.0, tau, steps + 1)
    s = times / tau
    G, M = len(nodes), len(offs)
    values = np.empty(G * M)
    moms = np.empty((G * M, n))
    worst = 0.0
    flat_x = np.repeat(nodes, M, axis=0)
    flat_d = np.tile(offs, (G, 1))
    for lo in range(0, G * M, chunk):
        x = flat_x[lo:lo + chunk]
        d = flat_d[lo:lo + chunk]
        y = x - d
        q0 = y[:, None, :] + s[None, :, None] * d[:, None, :]
        q, S, res, conv, mom = minimize_paths(H, q0, times, tol=tol)
        values[lo:lo + chunk] = S
        moms[lo:lo + chunk] = mom[:, -1, :]
        worst = max(worst, float(res.max()))
    return ActionKernel(tau, grid, n, radius, values.reshape(G, M), moms.reshape(G, M, n),
                        worst, steps)


@dataclass
class ValueGrid:
    c: np.ndarray
    grid: int
    u: np.ndarray               # (grid,)*n, zero mean
    alpha: float
    iterations: int
    increment: float
    tau: float
    converged: bool
    alpha_bounds: tuple = (np.nan, np.nan)
    momenta: np.ndarray = None  # calibrating momenta, (grid,)*n + (n,)
    lift_bound_ok: bool = True
    diagnostics: dict = field(default_factory=dict)
    kernel: ActionKernel = None

    @property
    def n(self):
        return len(self.c)

    def to_dict(self):
        return {"c": self.c.tolist(), "grid": self.grid, "alpha": self.alpha,
                "alpha_bounds": list(self.alpha_bounds), "iterations": self.iterations,
                "increment": self.increment, "tau": self.tau, "converged": self.converged,
                "lift_bound_ok": self.lift_bound_ok, "u": self.u.ravel().tolist()}


def _neighbor_index(grid, n, radius):
    """Flat index of x_i - j/grid for every node i and box offset j."""
    nodes = np.array(list(itertools.product(range(grid), repeat=n)), int)
    r = np.arange(-radius, radius + 1)
    offs = np.array(list(itertools.product(r, repeat=n)), int)
    nb = np.mod(nodes[:, None, :] - offs[None, :, :], grid)
    weights = grid ** np.arange(n - 1, -1, -1)
    return nb @ weights


def _refine(phi_box, n, width):
    """Minimum of phi over the box with a quadratic sub-grid correction.

    Returns (value, argmin multi-index, sub-grid shift s in offset units,
    at_edge flag).
    """
    G = phi_box.shape[0]
    flat = phi_box.reshape(G, -1)
    k = np.argmin(flat, axis=1)
    base = flat[np.arange(G), k]
    idx = np.array(np.unravel_index(k, (width,) * n)).T     # (G, n)
    at_edge = np.any((idx == 0) | (idx == width - 1), axis=1)
    inner = ~at_edge
    shift = np.zeros((G, n))
    value = base.copy()
    if not inner.any():
        return value, idx, shift, at_edge
    ii = np.nonzero(inner)[0]
    ci = idx[ii]

    def at(delta):
        pos = ci + np.asarray(delta)
        return phi_box[(ii,) + tuple(pos.T)]

    e = np.eye(n, dtype=int)
    g = np.stack([(at(e[a]) - at(-e[a])) / 2 for a in range(n)], axis=-1)
    A = np.empty((len(ii), n, n))
    for a in range(n):
        A[:, a, a] = at(e[a]) - 2 * base[ii] + at(-e[a])
        for b in range(a + 1, n):
            A[:, a, b] = A[:, b, a] = (at(e[a] + e[b]) - at(e[a] - e[b])
                                       - at(-e[a] + e[b]) + at(-e[a] - e[b])) / 4
    ev = np.linalg.eigvalsh(A)[:, 0]
    ok = ev > 0
    s = np.zeros((len(ii), n))
    if ok.any():
        s[ok] = -np.linalg.solve(A[ok], g[ok][..., None])[..., 0]
    ok &= np.all(np.abs(s) <= 1.0, axis=1)
    s[~ok] = 0.0
    drop = 0.5 * np.einsum("ka,ka->k", g, s)
    value[ii] = base[ii] + np.where(ok, drop, 0.0)
    shift[ii] = s
    return value, idx, shift, at_edge


class LaxOleinik:
    """The operator T for one class c on a precomputed kernel."""

    def __init__(self, kernel, c):
        self.kernel = kernel
        self.c = np.atleast_1d(np.asarray(c, float))
        if self.c.shape != (kernel.n,):
            raise PreconditionError("class has the wrong dimension")
        self.index = _neighbor_index(kernel.grid, kernel.n, kernel.radius)
        self.Kc = kernel.values - kernel.displacements() @ self.c

    def apply(self, u_flat, refine=True):
        k = self.kernel
        phi = u_flat[self.index] + self.Kc
        if not refine:
            j = np.argmin(phi, axis=1)
            return phi[np.arange(len(j)), j], None
        box = phi.reshape((len(phi),) + (k.width,) * k.n)
        val, idx, shift, edge = _refine(box, k.n, k.width)
        return val, (idx, shift, edge)

    def apply_max(self, u_flat):
        """Backward operator: max over x of u(x) - A^c(y, x), written on y."""
        k = self.kernel
        G = len(u_flat)
        out = np.full(G, -np.inf)
        # node i with offset j contributes to y = i - j
        np.maximum.at(out, self.index.ravel(), (u_flat[:, None] - self.Kc).ravel())
        return out

    def momenta(self, info):
        """End momenta of the calibrating extremals, linear in the sub-grid shift."""
        k = self.kernel
        idx, shift, edge = info
        G = len(idx)
        width = k.width
        mom = k.end_momenta.reshape((G,) + (width,) * k.n + (k.n,))
        rows = np.arange(G)
        p = mom[(rows,) + tuple(idx.T)]
        for a in range(k.n):
            up = np.clip(idx.copy(), 0, width - 1)
            dn = up.copy()
            up[:, a] = np.minimum(up[:, a] + 1, width - 1)
            dn[:, a] = np.maximum(dn[:, a] - 1, 0)
            slope = (mom[(rows,) + tuple(up.T)] - mom[(rows,) + tuple(dn.T)]) / 2
            p = p + shift[:, a:a + 1] * slope
        return p


def lax_oleinik_alpha(H, c, tau=0.5, grid=64, tol=1e-8, max_sweeps=10_000, kernel=None,
                      window=None, steps=16, refine=True, relax=0.5, u0=None):
    """Critical value alpha(c) and a weak KAM solution by value iteration.

    Each sweep applies T, renormalizes to zero mean and averages with the
    previous iterate, u <- (1 - relax) u + relax (T u - mean). The average
    has the same fixed points as T but does not cycle on classes whose
    minimizers rotate around the torus; relax = 1 is plain iteration.
    alpha is minus the mean one-step decrement divided by tau, and the
    spread of the decrement bounds the additive eigenvalue of the discrete
    operator (``alpha_bounds``). ``u0`` warm-starts the iteration, e.g.
    from the solution of a nearby class.
    """
    n = H.n
    if kernel is None:
        min_grid = 64 if n == 1 else 32
        if grid < min_grid:
            raise PreconditionError(f"grid must be at least {min_grid} per dimension")
        kernel = action_kernel(H, grid, tau, window=window, steps=steps)
    op = LaxOleinik(kernel, c)
    G = kernel.grid ** n
    u = np.zeros(G) if u0 is None else np.asarray(u0, float).ravel() - np.mean(u0)
    incr = np.inf
    it = 0
    dec = np.zeros(G)
    for it in range(1, max_sweeps + 1):
        tu, info = op.apply(u, refine)
        dec = tu - u
        new = (1.0 - relax) * u + relax * (tu - tu.mean())
        incr = float(np.max(np.abs(new - u))) / relax
        u = new
        if incr < tol:
            break
    tu, info = op.apply(u, refine)
    dec = tu - u
    alpha = float(-dec.mean() / kernel.tau)
    bounds = (float(-dec.max() / kernel.tau), float(-dec.min() / kernel.tau))
    converged = incr < tol
    if not converged:
        log.warning("value iteration stopped at increment %.3g after %d sweeps", incr, it)
    momenta = None
    edge_ok = True
    if refine:
        idx, shift, edge = info
        edge_ok = not edge.any()
        momenta = fourier.to_grid(op.momenta(info), kernel.grid, n)
    return ValueGrid(np.atleast_1d(np.asarray(c, float)), kernel.grid,
                     fourier.to_grid(u, kernel.grid, n), alpha, it, incr, kernel.tau,
                     converged, bounds, momenta, edge_ok,
                     {"kernel_residual": kernel.max_residual}, kernel)


@dataclass
class AubryEstimate:
    mask: np.ndarray             # (grid,)*n booleans
    momenta: np.ndarray          # c + Du by spectral differentiation
    calibrated_momenta: np.ndarray
    residual: np.ndarray
    tol: float
    strict_mask: np.ndarray = None
    gap: np.ndarray = None


def aubry_estimate(vg, tol=None, strict=True, strict_tol=1e-6, max_sweeps=10_000):
    """Grid points where the calibration residual vanishes, with momenta.

    The default ``tol`` is max(1e-6, 10 * increment): an unconverged value
    grid cannot be calibrated more sharply than its last sweep moved it.

    With ``strict`` the conjugate (backward) solution u+ is also computed
    on the grid and the points where u - u+ vanishes are returned as
    ``strict_mask``; it singles out the recurrent part of the Aubry set.
    """
    if vg.kernel is None:
        raise PreconditionError("value grid carries no kernel")
    n = vg.n
    op = LaxOleinik(vg.kernel, vg.c)
    if tol is None:
        tol = max(1e-6, 10.0 * vg.increment)
    u = vg.u.ravel()
    tu, _ = op.apply(u)
    residual = np.abs(u - tu - vg.alpha * vg.tau)
    mask = residual < tol
    if not mask.any():
        log.warning("empty Aubry estimate; grid may be under-resolved (tol %.3g)", tol)
    grad = fourier.gradient(vg.u, n)
    momenta = vg.c + grad
    est = AubryEstimate(fourier.to_grid(mask, vg.grid, n), momenta, vg.momenta,
                        fourier.to_grid(residual, vg.grid, n), tol)
    if strict:
        # grid-exact operators, so that the gap vanishes on critical cycles
        um = np.zeros_like(u)
        for _ in range(max_sweeps):
            tu, _ = op.apply(um, refine=False)
            new = tu - tu.mean()
            if np.max(np.abs(new - um)) < 1e-12:
                um = new
                break
            um = new
        tu, _ = op.apply(um, refine=False)
        lam = float(np.mean(um - tu))
        up = um.copy()
        for _ in range(max_sweeps):
            new = op.apply_max(up) - lam
            if np.max(np.abs(new - up)) < 1e-12:
                up = new
                break
            up = new
        gap = um - up
        est.gap = fourier.to_grid(gap, vg.grid, n)
        est.strict_mask = fourier.to_grid(gap < strict_tol, vg.grid, n)
    return est


# ---------------------------------------------------------------------------
# foliation map


@dataclass
class FoliationReport:
    classes: np.ndarray          # (C, n)
    alphas: np.ndarray           # (C,)
    sections: np.ndarray         # (C, grid**n, n) momenta on the grid
    at_x: np.ndarray             # (C, n) F_x(c) at the requested point
    min_leaf_distance: float     # min over class pairs and grid of |F(c) - F(c')|
    injectivity_ratio: float     # min |F_x(c) - F_x(c')| / |c - c'|
    max_jump_ratio: float        # max |F_x(c_k+1) - F_x(c_k)| / |c_k+1 - c_k|
    monotone: bool
    energy_defect: float         # max |H(x, F_x(c)) - alpha(c)|
    flagged: list
    values: list


def foliation_map(H, x, classes, tau=0.5, grid=64, momenta="spectral", kernel=None, **kw):
    """F_x(c) for a list of classes, with graph and disjointness checks."""
    classes = np.atleast_2d(np.asarray(classes, float))
    if classes.shape[1] != H.n:
        classes = classes.T
    n = H.n
    kernel = kernel or action_kernel(H, grid, tau, **kw)
    nodes = fourier.grid_points(kernel.grid, n)
    sections, alphas, values, flagged = [], [], [], []
    u0 = None
    for c in classes:
        vg = lax_oleinik_alpha(H, c, kernel=kernel, u0=u0)
        u0 = vg.u
        est = aubry_estimate(vg, strict=False)
        sec = est.momenta if momenta == "spectral" else est.calibrated_momenta
        sec = sec.reshape(-1, n)
        if not est.mask.all():
            flagged.append(c.tolist())
        sections.append(sec)
        alphas.append(vg.alpha)
        values.append(vg)
    sections = np.array(sections)
    alphas = np.array(alphas)
    at_x = np.array([fourier.evaluate(fourier.to_grid(s, kernel.grid, n), n,
                                      np.mod(np.atleast_2d(x), 1.0))[0] for s in sections])
    C = len(classes)
    min_leaf = np.inf
    inj = np.inf
    for a in range(C):
        for b in range(a + 1, C):
            min_leaf = min(min_leaf, float(np.min(np.linalg.norm(sections[a] - sections[b], axis=-1))))
            inj = min(inj, float(np.linalg.norm(at_x[a] - at_x[b]) / np.linalg.norm(classes[a] - classes[b])))
    dc = np.linalg.norm(np.diff(classes, axis=0), axis=-1)
    dF = np.linalg.norm(np.diff(at_x, axis=0), axis=-1)
    jump = float(np.max(dF / dc)) if C > 1 else 0.0
    proj = np.einsum("ka,ka->k", np.diff(at_x, axis=0), np.diff(classes, axis=0))
    energy = max(float(np.max(np.abs(H(nodes, s) - al))) for s, al in zip(sections, alphas))
    return FoliationReport(classes, alphas, sections, at_x, min_leaf, inj, jump,
                           bool(np.all(proj > 0)), energy, flagged, values)


# ---------------------------------------------------------------------------
# radial convergence


@dataclass
class RadialReport:
    periods: list
    classes: list
    velocities: list
    distances: list
    non_increasing: bool
    final_distance: float


def radial_convergence_probe(H, c, x0, periods, aubry_velocity, dt=None, t_min=T_MIN):
    """Initial velocities of T-periodic minimizing loops of L - c.v at x0.

    For each T the loop class k ranges over round(c T) + {-1, 0, 1}^n and
    the class minimizing A_T(x0, x0 + k) - c.k is kept. The distance from
    its initial velocity to ``aubry_velocity`` should decrease with T.
    """
    c = np.atleast_1d(np.asarray(c, float))
    x0 = np.atleast_1d(np.asarray(x0, float))
    target = np.atleast_1d(np.asarray(aubry_velocity, float))
    out_k, out_v, dist = [], [], []
    for T in periods:
        if T < t_min:
            raise PreconditionError(f"period {T} below t_min={t_min}")
        base = np.round(c * T)
        best = None
        for off in start_offsets(H.n):
            k = base + off
            res = min_action(H, x0, x0 + k, T, dt=dt)
            val = res.value - float(c @ k)
            if best is None or val < best[0] - 1e-12:
                best = (val, k, res)
        _, k, res = best
        v0 = res.path.velocities[0]
        out_k.append(k.astype(int).tolist())
        out_v.append(v0.tolist())
        dist.append(float(np.linalg.norm(v0 - target)))
    mono = all(b <= a + 1e-12 for a, b in zip(dist[:-1], dist[1:]))
    return RadialReport(list(periods), out_k, out_v, dist, mono, dist[-1])
