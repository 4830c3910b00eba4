"""Normal form near a torus of periodic orbits and families of KAM tori.

Coordinates (theta, I) near a periodic torus with momentum section P are
given by p = P(theta) + I. In them the period map fixes I = 0 pointwise and
its linearization in I is the twist A(theta). Rescaling I by eps gives maps
Phi_eps = Id + eps (A I, 0) + O(eps^2) whose m-fold compositions U_m with
eps = 1/m approach the time-one map of the linear shear. Invariant tori of
U_m with a Diophantine rotation vector are found by a Newton method on the
torus parameterization, in the symplectic frame attached to the torus.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import fourier
from .errors import (HypothesisViolated, NewtonStagnation, NonFlatTwistError,
                     NotConvergedError, PreconditionError, SmallDivisorError)
from .green import conjugate_scan
from .integrators import IntegratorSpec, integrate
from .periodic_tori import PeriodicTorusData, default_spec

SMALL_DIVISOR_FLOOR = 1e-14

# ---------------------------------------------------------------------------
# Diophantine vectors

NAMED_FREQUENCIES = {
    "golden": [(math.sqrt(5.0) - 1.0) / 2.0],
    "silver": [math.sqrt(2.0) - 1.0],
    "golden2": [math.sqrt(2.0) - 1.0, math.sqrt(3.0) - 1.0],
}


@dataclass
class DiophantineVector:
    omega: np.ndarray
    gamma: float
    tau: float
    verified_up_to: int

    @property
    def n(self):
        return len(self.omega)


def diophantine_constant(omega, tau, K):
    """min over 0 < |k|_1 <= K of |k.omega + l| |k|_1^tau, best integer l."""
    omega = np.atleast_1d(np.asarray(omega, float))
    n = len(omega)
    best = np.inf
    rng = range(-K, K + 1)
    for k in itertools.product(rng, repeat=n):
        norm = sum(abs(c) for c in k)
        if norm == 0 or norm > K:
            continue
        # k and -k give the same value
        first = next(c for c in k if c != 0)
        if first < 0:
            continue
        s = float(np.dot(k, omega))
        val = abs(s - round(s)) * norm ** tau
        best = min(best, val)
    return best


def certify_diophantine(omega, tau=None, K=None):
    """Estimate the Diophantine constant of omega with exponent tau.

    ``omega`` may be a named vector ("golden", "silver", "golden2"). The
    default tau is n (the exponent used for typical vectors, strictly above
    n - 1) and the certificate checks all |k|_1 <= K.
    """
    if isinstance(omega, str):
        if omega not in NAMED_FREQUENCIES:
            raise PreconditionError(f"unknown frequency name {omega!r}")
        omega = NAMED_FREQUENCIES[omega]
    omega = np.atleast_1d(np.asarray(omega, float))
    n = len(omega)
    tau = float(n) if tau is None else float(tau)
    if tau < n - 1:
        raise PreconditionError("tau must be at least n - 1")
    K = (2000 if n == 1 else 60) if K is None else int(K)
    gamma = diophantine_constant(omega, tau, K)
    if not gamma > 0:
        raise PreconditionError("frequency is resonant up to the checked order")
    return DiophantineVector(omega, float(gamma), tau, K)


# ---------------------------------------------------------------------------
# normal form


@dataclass
class NormalFormData:
    A_bar: np.ndarray
    A: np.ndarray                 # twist on the grid, (grid,)*n + (n, n)
    symmetry_defect: float
    min_eigenvalue: float
    theta_defect: float           # max |A(theta) - A_bar|
    translation_defect: float     # departure of the I = 0 map from theta -> theta
    Q_defect: float               # max |dI'/dI - Id| at I = 0
    B: np.ndarray = None          # d^2 I'_j / dI_k dI_l, (grid,)*n + (n, n, n)
    B_defect: float = None        # max |B_{j,kl} + d_j A_{kl}|
    remainders: dict = field(default_factory=dict)

    @property
    def flat(self):
        return self.theta_defect <= self.remainders.get("flat_tol", 1e-6)


def _section_and_slope(torus, theta):
    n = torus.n
    P = fourier.evaluate(torus.P, n, np.mod(theta, 1.0))
    dP = fourier.evaluate(fourier.gradient(torus.P, n), n, np.mod(theta, 1.0))
    return P, dP


def extract_twist(H, torus, spec=None, flat_tol=1e-6, delta=1e-4, require_flat=True,
                  second_order=True):
    """Twist A(theta), dI'/dI and the second-order term B of the period map.

    B is obtained by central differences in I with step ``delta`` and
    compared with -d_theta A. With ``require_flat`` a twist that depends on
    theta beyond ``flat_tol`` raises NonFlatTwistError (the data is attached
    to the exception).
    """
    n = torus.n
    spec = spec or default_spec(H)
    theta = torus.nodes()
    P = torus.P.reshape(-1, n)
    dP_grid = fourier.gradient(torus.P, n)          # (..., i, a) = dP_i/dtheta_a
    dP = dP_grid.reshape(-1, n, n)
    B_ = len(theta)
    eye = np.broadcast_to(np.eye(2 * n), (B_, 2 * n, 2 * n)).copy()
    xt, pt, D, _ = integrate(H, theta, P, torus.T, spec, frame=eye)
    Xt, Xp, Yt, Yp = D[:, :n, :n], D[:, :n, n:], D[:, n:, :n], D[:, n:, n:]
    A = Xp
    Q = Yp - dP @ Xp
    translation = np.maximum(np.max(np.abs(Xt + Xp @ dP - np.eye(n)), axis=(1, 2)),
                             np.max(np.abs(Yt + Yp @ dP - dP @ (Xt + Xp @ dP)), axis=(1, 2)))
    A_grid = fourier.to_grid(A, torus.grid, n)
    A_bar = np.mean(A, axis=0)
    sym = float(np.max(np.abs(A - np.swapaxes(A, -1, -2))))
    min_eig = float(np.linalg.eigvalsh(0.5 * (A_bar + A_bar.T)).min())
    theta_def = float(np.max(np.abs(A - A_bar)))
    data = NormalFormData(A_bar, A_grid, sym, min_eig, theta_def, float(translation.max()),
                          float(np.max(np.abs(Q - np.eye(n)))),
                          remainders={"flat_tol": flat_tol,
                                      "closure": float(np.max(np.abs(xt - theta - torus.r))),
                                      "fixedness": float(np.max(np.abs(pt - P)))})
    if second_order:
        B = np.zeros((B_, n, n, n))
        for l in range(n):
            qs = []
            for sgn in (1.0, -1.0):
                p = P.copy()
                p[:, l] += sgn * delta
                fr = np.zeros((B_, 2 * n, n))
                fr[:, n:, :] = np.eye(n)
                x1, _, F, _ = integrate(H, theta, p, torus.T, spec, frame=fr)
                _, dP1 = _section_and_slope(torus, x1 - torus.r)
                qs.append(F[:, n:, :] - dP1 @ F[:, :n, :])
            B[:, :, :, l] = (qs[0] - qs[1]) / (2 * delta)
        dA = fourier.gradient(A_grid, n).reshape(B_, n, n, n)   # (k, l, j)
        dA_jkl = np.moveaxis(dA, -1, 1)
        data.B = fourier.to_grid(B, torus.grid, n)
        data.B_defect = float(np.max(np.abs(B + dA_jkl)))
    if require_flat and theta_def > flat_tol:
        raise NonFlatTwistError("twist depends on theta", theta_defect=theta_def, data=data)
    return data


# ---------------------------------------------------------------------------
# rescaled maps


def check_hypothesis(H, torus, t_check=None, samples=4, spec=None, extra_points=()):
    """Conjugate times along orbits of the torus up to ``t_check``.

    Returns the list of (point, times) with at least one conjugate time.
    """
    n = torus.n
    t_check = 2.0 * torus.T if t_check is None else t_check
    nodes = fourier.grid_points(samples, n)
    pts = [(th, torus.section(th[None])[0]) for th in nodes]
    pts += [(np.asarray(a, float), np.asarray(b, float)) for a, b in extra_points]
    found = []
    for th, p in pts:
        rep = conjugate_scan(H, (th, p), t_check, spec)
        if rep.times:
            found.append({"theta": th.tolist(), "p": p.tolist(), "times": rep.times})
    return found


class RescaledMap:
    """Phi_eps(theta, I) = R_eps^{-1} phi_T R_eps(theta, I), R_eps: p = P(theta) + eps I.

    Angles are lifted: the returned theta' is x(T) - r without reduction.
    """

    def __init__(self, H, torus, eps, spec=None, check=True, t_check=None, strict=True,
                 extra_points=()):
        if eps <= 0:
            raise PreconditionError("eps must be positive")
        self.H = H
        self.torus = torus
        self.eps = float(eps)
        self.spec = spec or default_spec(H)
        self.n = torus.n
        self.violations = []
        if check:
            self.violations = check_hypothesis(H, torus, t_check, extra_points=extra_points)
            if self.violations and strict:
                raise HypothesisViolated("base torus has conjugate points",
                                         violations=self.violations)

    @property
    def hypothesis_violated(self):
        return bool(self.violations)

    def __call__(self, theta, I, jacobian=False):
        n, eps = self.n, self.eps
        theta = np.atleast_2d(theta)
        I = np.atleast_2d(I)
        P0, dP0 = _section_and_slope(self.torus, theta)
        p = P0 + eps * I
        if not jacobian:
            x1, p1, _, _ = integrate(self.H, theta, p, self.torus.T, self.spec)
            th1 = x1 - self.torus.r
            P1, _ = _section_and_slope(self.torus, th1)
            return th1, (p1 - P1) / eps
        eye = np.broadcast_to(np.eye(2 * n), (len(theta), 2 * n, 2 * n)).copy()
        x1, p1, D, _ = integrate(self.H, theta, p, self.torus.T, self.spec, frame=eye)
        th1 = x1 - self.torus.r
        P1, dP1 = _section_and_slope(self.torus, th1)
        Xt, Xp, Yt, Yp = D[:, :n, :n], D[:, :n, n:], D[:, n:, :n], D[:, n:, n:]
        dth_dth = Xt + Xp @ dP0
        J = np.empty_like(D)
        J[:, :n, :n] = dth_dth
        J[:, :n, n:] = eps * Xp
        J[:, n:, :n] = (Yt + Yp @ dP0 - dP1 @ dth_dth) / eps
        J[:, n:, n:] = Yp - dP1 @ Xp
        return th1, (p1 - P1) / eps, J


def rescaled_map(H, torus, eps, spec=None, **kw):
    return RescaledMap(H, torus, eps, spec, **kw)


def compose(step, m):
    """m-fold composition of a map (theta, I, jacobian) -> ..., with chain rule."""

    def U(theta, I, jacobian=False):
        J = None
        for _ in range(m):
            if jacobian:
                theta, I, Jk = step(theta, I, jacobian=True)
                J = Jk if J is None else Jk @ J
            else:
                theta, I = step(theta, I)
        return (theta, I, J) if jacobian else (theta, I)

    return U


def euler_composition_error(step, exact_flow, z, c0, eps_list):
    """Errors of m = floor(c0 / eps) compositions of ``step(z, eps)`` against
    the time-c0 flow, and the fitted log-log slope."""
    z = np.asarray(z, float)
    target = exact_flow(z, c0)
    errs = []
    for eps in eps_list:
        m = int(math.floor(c0 / eps + 1e-12))
        w = z.copy()
        for _ in range(m):
            w = step(w, eps)
        errs.append(float(np.max(np.abs(w - target))))
    errs = np.array(errs)
    eps_arr = np.asarray(eps_list, float)
    good = errs > 0
    slope = float(np.polyfit(np.log(eps_arr[good]), np.log(errs[good]), 1)[0]) \
        if good.sum() >= 2 else float("nan")
    return {"eps": eps_arr.tolist(), "errors": errs.tolist(), "slope": slope}


# ---------------------------------------------------------------------------
# invariant tori of twist maps


@dataclass
class TorusEmbedding:
    """K(eta) = (eta + u(eta), v(eta)) sampled on a uniform grid."""

    u: np.ndarray       # (grid,)*n + (n,)
    v: np.ndarray       # (grid,)*n + (n,)
    omega: np.ndarray
    cutoff: int

    @property
    def n(self):
        return len(self.omega)

    @property
    def I0(self):
        return fourier.mean(self.v, self.n)

    def theta(self):
        g = self.u.shape[0]
        return fourier.to_grid(fourier.grid_points(g, self.n), g, self.n) + self.u

    def coefficients(self, count=4):
        """Leading Fourier coefficients of u and v (n = 1: modes 0..count-1)."""
        cu = fourier.coefficients(self.u, self.n)
        cv = fourier.coefficients(self.v, self.n)
        sl = (slice(0, count),) * self.n
        return {"u": _cplx(cu[sl]), "v": _cplx(cv[sl])}

    def graph_section(self, x):
        """Value v(eta) at the parameter eta with eta + u(eta) = x (mod 1)."""
        x = np.atleast_2d(x)
        eta = x.copy()
        for _ in range(100):
            new = x - fourier.evaluate(self.u, self.n, np.mod(eta, 1.0))
            if np.max(np.abs(new - eta)) < 1e-15:
                eta = new
                break
            eta = new
        return fourier.evaluate(self.v, self.n, np.mod(eta, 1.0))


def _cplx(a):
    return {"re": np.real(a).tolist(), "im": np.imag(a).tolist()}


@dataclass
class InvarianceResult:
    embedding: TorusEmbedding
    residual: float
    offgrid_residual: float
    history: list
    converged: bool
    min_divisor: float


_J = None


def _symplectic_J(n):
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = np.eye(n)
    J[n:, :n] = -np.eye(n)
    return J


def _solve_cohomological(rhs, n, omega, grid_shape):
    """phi(eta) - phi(eta + omega) = rhs(eta) for mean-free rhs; mean-free phi."""
    coef = np.fft.fftn(rhs, axes=tuple(range(n)))
    phase = np.zeros(grid_shape)
    for a in range(n):
        shape = [1] * n
        shape[a] = grid_shape[a]
        phase = phase + (fourier.wavenumbers(grid_shape[a]) * omega[a]).reshape(shape)
    div = 1.0 - np.exp(2j * np.pi * phase)
    zero = np.zeros(grid_shape, bool)
    zero[(0,) * n] = True
    small = np.abs(div[~zero]).min() if div.size > 1 else np.inf
    if small < SMALL_DIVISOR_FLOOR:
        raise SmallDivisorError("small divisor below floor", divisor=float(small))
    div = np.where(zero, 1.0, div)
    div = div.reshape(div.shape + (1,) * (rhs.ndim - n))
    coef = coef / div
    coef[(0,) * n] = 0.0
    return np.fft.ifftn(coef, axes=tuple(range(n))).real, float(small)


def invariance_error(U, K, omega):
    n = len(omega)
    g = K.u.shape[0]
    th = K.theta().reshape(-1, n)
    I = K.v.reshape(-1, n)
    th1, I1 = U(th, I)
    eta = fourier.grid_points(g, n)
    target_th = eta + omega + fourier.shift(K.u, n, omega).reshape(-1, n)
    target_I = fourier.shift(K.v, n, omega).reshape(-1, n)
    return np.concatenate([th1 - target_th, I1 - target_I], axis=-1)


def _offgrid_residual(U, K, omega):
    """Residual at the midpoints of the grid, through trigonometric interpolation."""
    n = len(omega)
    g = K.u.shape[0]
    eta = fourier.grid_points(g, n) + 0.5 / g
    u = fourier.evaluate(K.u, n, np.mod(eta, 1.0))
    v = fourier.evaluate(K.v, n, np.mod(eta, 1.0))
    th1, I1 = U(eta + u, v)
    e2 = eta + omega
    u2 = fourier.evaluate(K.u, n, np.mod(e2, 1.0))
    v2 = fourier.evaluate(K.v, n, np.mod(e2, 1.0))
    return float(max(np.max(np.abs(th1 - e2 - u2)), np.max(np.abs(I1 - v2))))


def solve_invariance(U, K0, tol=1e-10, max_iter=20, basin=1e-1):
    """Newton iteration for U(K(eta)) = K(eta + omega).

    ``U(theta, I, jacobian)`` acts on batches of points. Each step solves
    the linearized equation in the frame (L, N), L = DK, N = -J L (L^T L)^-1,
    where it reduces to two cohomological equations coupled through the
    torsion S = -N(eta+omega)^T J DU N(eta). The mean of the normal
    correction is fixed by the averaged torsion and the mean of u is kept
    at zero. Raises on small divisors, on stagnation, and when the first
    residual exceeds ``basin``.
    """
    omega = np.atleast_1d(np.asarray(K0.omega, float))
    n = len(omega)
    g = K0.u.shape[0]
    shape = (g,) * n
    J = _symplectic_J(n)
    K = TorusEmbedding(K0.u.copy(), K0.v.copy(), omega, K0.cutoff)
    history = []
    min_div = np.inf
    eta = fourier.grid_points(g, n)
    for it in range(max_iter + 1):
        th = K.theta().reshape(-1, n)
        I = K.v.reshape(-1, n)
        th1, I1, DU = U(th, I, jacobian=True)
        Ksh_th = eta + omega + fourier.shift(K.u, n, omega).reshape(-1, n)
        Ksh_I = fourier.shift(K.v, n, omega).reshape(-1, n)
        E = np.concatenate([th1 - Ksh_th, I1 - Ksh_I], axis=-1)
        err = float(np.max(np.abs(E)))
        history.append(err)
        if it == 0 and err > basin:
            raise NotConvergedError("initial guess outside the Newton basin", residual=err)
        if err < tol:
            break
        if it == max_iter:
            break
        if it >= 2 and err > 0.5 * history[-2]:
            raise NewtonStagnation("invariance residual stopped decreasing", history=history)
        # frame
        Lth = np.eye(n) + np.moveaxis(fourier.gradient(K.u, n), -2, -2).reshape(-1, n, n)
        Lv = fourier.gradient(K.v, n).reshape(-1, n, n)
        L = np.concatenate([Lth, Lv], axis=1)                 # (B, 2n, n)
        G = np.swapaxes(L, -1, -2) @ L
        N = -(J @ L) @ np.linalg.inv(G)
        N_sh = np.stack([fourier.shift(fourier.to_grid(N[:, :, k], g, n), n, omega).reshape(-1, 2 * n)
                         for k in range(n)], axis=-1)
        L_sh = np.stack([fourier.shift(fourier.to_grid(L[:, :, k], g, n), n, omega).reshape(-1, 2 * n)
                         for k in range(n)], axis=-1)
        S = -np.swapaxes(N_sh, -1, -2) @ J @ DU @ N
        # M(eta+omega)^{-1} = [[-N^T J], [L^T J]]
        eL = -(np.swapaxes(N_sh, -1, -2) @ J @ E[..., None])[..., 0]
        eN = (np.swapaxes(L_sh, -1, -2) @ J @ E[..., None])[..., 0]
        eLg = fourier.to_grid(eL, g, n)
        eNg = fourier.to_grid(eN, g, n)
        # xi_N(eta) - xi_N(eta + omega) = -eN
        rhsN = -(eNg - fourier.mean(eNg, n))
        xiN_hat, d1 = _solve_cohomological(rhsN, n, omega, shape)
        Sg = fourier.to_grid(S, g, n)
        S_bar = fourier.mean(Sg, n)
        xiN_flat = xiN_hat.reshape(-1, n)
        # xi_L(eta) - xi_L(eta + omega) = -eL - S xi_N; mean of rhs must vanish
        SxiN_bar = np.mean((S @ xiN_flat[..., None])[..., 0], axis=0)
        xiN_bar = np.linalg.solve(S_bar, -fourier.mean(eLg, n) - SxiN_bar)
        xiN = xiN_flat + xiN_bar
        rhsL = -eL - (S @ xiN[..., None])[..., 0]
        rhsLg = fourier.to_grid(rhsL, g, n)
        xiL_hat, d2 = _solve_cohomological(rhsLg - fourier.mean(rhsLg, n), n, omega, shape)
        min_div = min(min_div, d1, d2)
        xiL = xiL_hat.reshape(-1, n)
        # mean of the angle correction keeps mean(u) = 0
        dth_hat = (Lth @ xiL[..., None])[..., 0] + (N[:, :n, :] @ xiN[..., None])[..., 0]
        xiL_bar = np.linalg.solve(np.mean(Lth, axis=0), -np.mean(dth_hat, axis=0))
        xiL = xiL + xiL_bar
        dK = (L @ xiL[..., None])[..., 0] + (N @ xiN[..., None])[..., 0]
        K.u = K.u + fourier.to_grid(dK[:, :n], g, n)
        K.v = K.v + fourier.to_grid(dK[:, n:], g, n)
        K.u = K.u - fourier.mean(K.u, n)
    off = _offgrid_residual(lambda a, b: U(a, b), K, omega)
    return InvarianceResult(K, history[-1], off, history, history[-1] < tol, float(min_div))


# ---------------------------------------------------------------------------
# families of tori


def standard_map(kappa):
    """(theta, I) -> (theta + I', I') with I' = I + kappa / (2 pi) sin(2 pi theta)."""

    def F(theta, I, jacobian=False):
        I1 = I + kappa / (2 * np.pi) * np.sin(2 * np.pi * theta)
        th1 = theta + I1
        if not jacobian:
            return th1, I1
        c = kappa * np.cos(2 * np.pi * theta[:, 0])
        D = np.empty((len(theta), 2, 2))
        D[:, 1, 0] = c
        D[:, 1, 1] = 1.0
        D[:, 0, 0] = 1.0 + c
        D[:, 0, 1] = 1.0
        return th1, I1, D

    return F


def initial_embedding(omega, I0, grid):
    omega = np.atleast_1d(np.asarray(omega, float))
    n = len(omega)
    shape = (grid,) * n + (n,)
    return TorusEmbedding(np.zeros(shape), np.broadcast_to(I0, shape).copy(), omega, grid // 2)


@dataclass
class FamilyMember:
    m: int
    residual: float
    offgrid_residual: float
    rotation_error: float
    c0_distance: float
    flow_invariance: dict
    newton_steps: int
    converged: bool
    embedding: TorusEmbedding
    lift: list

    def to_dict(self):
        return {"m": self.m, "residual": self.residual, "offgrid_residual": self.offgrid_residual,
                "rotation_error": self.rotation_error, "c0_distance": self.c0_distance,
                "flow_invariance": self.flow_invariance, "newton_steps": self.newton_steps,
                "converged": self.converged, "lift": self.lift,
                "fourier_coeffs": self.embedding.coefficients()}


def _torus_points(torus, K, m):
    """Points (x, p) of the torus in the original coordinates, p = P(x) + v / m."""
    n = K.n
    th = K.theta().reshape(-1, n)
    P, _ = _section_and_slope(torus, th)
    return th, P + K.v.reshape(-1, n) / m


def _flow_invariance(H, torus, K, m, spec, fractions=(0.5, 1.0)):
    x, p = _torus_points(torus, K, m)
    out = {}
    for f in fractions:
        x1, p1, _, _ = integrate(H, x, p, f * torus.T, spec)
        P1, _ = _section_and_slope(torus, x1)
        v1 = K.graph_section(np.mod(x1, 1.0))
        out[f"{f}T"] = float(np.max(np.abs(p1 - P1 - v1 / m)))
    return out


def torus_family(H, torus, omega, m_values, grid=32, spec=None, tol=1e-10, check=True,
                 normal_form=None):
    """Invariant tori of U_m = Phi_{1/m}^m with rotation omega for each m.

    Each member reports the invariance residual of U_m, the error of the
    flow rotation vector against r/T + omega/(m T), the C^0 distance of the
    torus to the base torus, and the invariance defect under the flow at
    T/2 and T.
    """
    if isinstance(omega, DiophantineVector):
        omega = omega.omega
    omega = np.atleast_1d(np.asarray(omega, float))
    n = torus.n
    spec = spec or default_spec(H)
    nf = normal_form or extract_twist(H, torus, spec, second_order=False)
    I0 = np.linalg.solve(nf.A_bar, omega)
    members = []
    for m in m_values:
        phi = RescaledMap(H, torus, 1.0 / m, spec, check=check and not members)
        U = compose(phi, m)
        K0 = initial_embedding(omega, I0, grid)
        res = solve_invariance(U, K0, tol=tol)
        K = res.embedding
        x, p = _torus_points(torus, K, m)
        xm, _ = U(K.theta().reshape(-1, n), K.v.reshape(-1, n))
        # lifted displacement of the period-mT map in the original coordinates
        disp = xm + m * torus.r - K.theta().reshape(-1, n)
        lift = np.round(np.mean(disp, axis=0) - omega).astype(int)
        rotation = np.mean(disp, axis=0) / (m * torus.T)
        expected = torus.r / torus.T + omega / (m * torus.T)
        members.append(FamilyMember(
            m=int(m), residual=res.residual, offgrid_residual=res.offgrid_residual,
            rotation_error=float(np.max(np.abs(rotation - expected))),
            c0_distance=float(np.max(np.abs(K.v))) / m,
            flow_invariance=_flow_invariance(H, torus, K, m, spec),
            newton_steps=len(res.history) - 1, converged=res.converged, embedding=K,
            lift=(lift + m * torus.r).tolist()))
    return members


def fit_inverse_m(members):
    """Least-squares c in distance ~ c / m and the worst relative deviation."""
    m = np.array([mm.m for mm in members], float)
    d = np.array([mm.c0_distance for mm in members])
    c = float(np.sum(d / m) / np.sum(1.0 / m ** 2))
    dev = float(np.max(np.abs(d * m / c - 1.0)))
    return c, dev


def empirical_m0(members, residual_tol=1e-10):
    """Smallest m from which every larger listed m converged within tolerance."""
    ok = [mm.converged and mm.residual < residual_tol for mm in members]
    m0 = None
    for mm, good in zip(reversed(members), reversed(ok)):
        if not good:
            break
        m0 = mm.m
    return m0


def newton_orders(history):
    """Ratios log(e_{k+1}) / log(e_k); values near 2 indicate quadratic decay."""
    h = [e for e in history if e > 0]
    return [math.log(b) / math.log(a) for a, b in zip(h[:-1], h[1:]) if 0 < a < 1]


def birkhoff_check(F, K, observables, iterates=10 ** 6):
    """Time averages along one orbit of a solved torus versus space averages.

    ``F`` acts on scalar (theta, I) pairs; observables are functions of
    (theta, I) accepting floats or arrays.
    """
    n = K.n
    if n != 1:
        raise PreconditionError("Birkhoff check implemented for circle maps")
    th = float(K.theta().reshape(-1)[0])
    I = float(K.v.reshape(-1)[0])
    sums = [0.0] * len(observables)
    for _ in range(iterates):
        for k, f in enumerate(observables):
            sums[k] += f(th, I)
        th, I = F(th, I)
    time_avg = np.array(sums) / iterates
    thg = K.theta().reshape(-1)
    vg = K.v.reshape(-1)
    space_avg = np.array([float(np.mean(f(thg, vg))) for f in observables])
    return time_avg, space_avg
