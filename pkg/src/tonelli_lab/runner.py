"""Dispatch of experiment configurations and deterministic run reports."""

from __future__ import annotations

import fnmatch
import math
import platform
import time
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import __version__
from .config import ExperimentConfig, canonical_json
from .errors import ConfigError, TonelliError
from .hamiltonians import CATALOGUE_VERSION, build


@dataclass
class RunReport:
    config: ExperimentConfig
    payload: dict
    assertions: list = field(default_factory=list)
    wall_time: float = 0.0
    n: int = 1

    @property
    def passed(self):
        return all(a["passed"] for a in self.assertions)

    def to_dict(self):
        return {"task": self.config.task, "config": self.config.to_dict(),
                "config_hash": self.config.hash(), "seed": self.config.seed,
                "catalogue_version": CATALOGUE_VERSION,
                "versions": {"tonelli_lab": __version__, "numpy": np.__version__,
                             "scipy": scipy.__version__, "python": platform.python_version()},
                "wall_time": self.wall_time, "payload": self.payload,
                "assertions": self.assertions, "passed": self.passed}

    def payload_json(self):
        return canonical_json(self.payload)

    def to_json(self):
        return canonical_json(self.to_dict())


def _clean(obj):
    """Convert numpy containers and scalars to JSON-ready Python objects."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def _assert(name, value, limit, ok):
    return {"name": name, "passed": bool(ok), "value": _clean(value), "limit": limit}


def _model(cfg):
    h = cfg.hamiltonian
    return build(h["name"], h.get("n"), h.get("params"))


# ---------------------------------------------------------------------------
# tasks: each returns (payload, assertions)


def task_flow(cfg, H, spec):
    from .integrators import IntegratorSpec, flow, tangent_flow
    p = cfg.params
    spec = spec or IntegratorSpec()
    state = (np.asarray(p["x"], float), np.asarray(p["p"], float))
    if p.get("tangent"):
        fr = tangent_flow(H, state, p["t"], spec=spec)
        x1, p1 = fr.base.x, fr.base.p
        payload = {"x": x1, "p": p1, "winding": np.floor(x1).astype(int), "frame": fr.vectors}
    else:
        out = flow(H, state, p["t"], spec)
        payload = {"x": out.x, "p": out.p, "winding": out.winding}
    payload["t"] = p["t"]
    ok = np.all(np.isfinite(payload["x"])) and np.all(np.isfinite(payload["p"]))
    return payload, [_assert("finite state", bool(ok), True, ok)]


def task_minimize(cfg, H, spec):
    from .action import min_action, shooting_residual
    p = cfg.params
    r = min_action(H, p["x"], p["y"], p["t"], dt=p.get("dt"), tol=p.get("tol", 1e-10))
    payload = {"value": r.value, "converged": r.converged, "gradient_norm": r.gradient_norm,
               "ties": r.ties, "path": r.path.to_records()}
    asserts = [_assert("converged", r.converged, True, r.converged)]
    if spec is not None:
        payload["shooting_residual"] = shooting_residual(H, r, spec)
    return payload, asserts


def task_torus(cfg, H, spec):
    from .periodic_tori import build_torus
    p = cfg.params
    torus = build_torus(H, p["T"], p["r"], grid=p.get("grid", 32), spec=spec,
                        tol=p.get("tol", 1e-12), strict=False)
    d = torus.diagnostics
    asserts = [_assert("closure", d["closure"], 1e-8, d["closure"] < 1e-8),
               _assert("action_spread", d["action_spread"], 1e-7, d["action_spread"] < 1e-7),
               _assert("lagrangian_defect", d["lagrangian_defect"], 1e-6,
                       d["lagrangian_defect"] < 1e-6),
               _assert("fixedness", d["fixedness"], 1e-7, d["fixedness"] < 1e-7)]
    return torus.to_dict(), asserts


def task_green(cfg, H, spec):
    from .green import conjugate_scan, green_minus, green_order_gap, green_plus
    p = cfg.params
    z = (np.asarray(p["x"], float), np.asarray(p["p"], float))
    kw = {"levels": p.get("levels", 4), "tol": p.get("tol", 1e-8)}
    gp = green_plus(H, z, p["horizon"], spec, **kw)
    gm = green_minus(H, z, p["horizon"], spec, **kw)
    payload = {}
    for tag, g in (("plus", gp), ("minus", gm)):
        payload[tag] = {"limit": g.limit, "mode": g.mode, "converged": g.converged,
                        "monotone": g.monotone, "increments": g.increments,
                        "horizons": g.horizons}
    asserts = [_assert("G+ converged", gp.converged, True, gp.converged),
               _assert("G- converged", gm.converged, True, gm.converged)]
    if gp.limit is not None and gm.limit is not None:
        gap = green_order_gap(gm, gp)
        payload["order_gap"] = gap
        asserts.append(_assert("S- <= S+", gap, -1e-8, gap >= -1e-8))
    if "conjugate_t_max" in p:
        rep = conjugate_scan(H, z, p["conjugate_t_max"], spec)
        payload["conjugate_times"] = rep.times
        payload["near_zeros"] = rep.near_zeros
    return payload, asserts


def task_lyapunov(cfg, H, spec):
    from .green import lyapunov_spectrum
    p = cfg.params
    rep = lyapunov_spectrum(H, (np.asarray(p["x"], float), np.asarray(p["p"], float)),
                            p["horizon"], spec, renorm_every=p.get("renorm_every", 10))
    payload = {"exponents": rep.exponents, "raw": rep.raw, "zero_count": rep.zero_count,
               "threshold": rep.threshold, "pairing_defect": rep.pairing_defect,
               "horizon": rep.horizon}
    return payload, [_assert("symplectic pairing", rep.pairing_defect, 1e-3,
                             rep.pairing_defect < 1e-3)]


def task_kam(cfg, H, spec):
    from . import kam
    p = cfg.params
    omega = p.get("omega", "golden")
    omega = kam.NAMED_FREQUENCIES[omega] if isinstance(omega, str) else omega
    tol = p.get("tol", 1e-10)
    if p.get("mode", "family") == "standard":
        F = kam.standard_map(p.get("kappa", 0.1))
        out = kam.solve_invariance(F, kam.initial_embedding(omega, omega, p.get("grid", 64)),
                                   tol=tol)
        payload = {"residual": out.residual, "history": out.history,
                   "orders": kam.newton_orders(out.history), "converged": out.converged,
                   "u": out.embedding.u.ravel(), "v": out.embedding.v.ravel()}
        return payload, [_assert("invariance residual", out.residual, tol, out.residual < tol)]
    from .periodic_tori import build_torus
    torus = build_torus(H, p.get("T", 1.0), p.get("r", [1] * H.n), grid=p.get("torus_grid", 32),
                        spec=spec)
    nf = kam.extract_twist(H, torus, spec)
    members = kam.torus_family(H, torus, omega, p.get("m_values", [4, 8, 16, 32, 64]),
                               grid=p.get("grid", 32), spec=spec, tol=tol, normal_form=nf)
    c, dev = kam.fit_inverse_m(members)
    payload = {"A_bar": nf.A_bar, "B_defect": nf.B_defect, "members": [m.to_dict() for m in members],
               "inverse_m_fit": {"c": c, "deviation": dev}, "m0": kam.empirical_m0(members, tol)}
    worst = max(m.residual for m in members)
    rot = max(m.rotation_error for m in members)
    return payload, [_assert("invariance residual", worst, tol, worst < tol),
                     _assert("rotation relation", rot, 1e-8, rot < 1e-8)]


def task_alpha(cfg, H, spec):
    from .weak_kam import aubry_estimate, lax_oleinik_alpha
    p = cfg.params
    vg = lax_oleinik_alpha(H, p["c"], tau=p.get("tau", 0.5), grid=p.get("grid", 64),
                           tol=p.get("tol", 1e-8), max_sweeps=p.get("max_sweeps", 10_000))
    est = aubry_estimate(vg, strict=False)
    payload = vg.to_dict()
    payload.update({"aubry_mask": est.mask.ravel(), "momenta": est.momenta.reshape(-1, H.n),
                    "aubry_tol": est.tol})
    return payload, [_assert("value iteration converged", vg.converged, True, vg.converged)]


def task_foliation(cfg, H, spec):
    from .weak_kam import foliation_map
    p = cfg.params
    rep = foliation_map(H, p["x"], p["c_grid"], tau=p.get("tau", 0.5), grid=p.get("grid", 64),
                        momenta=p.get("momenta", "spectral"))
    payload = {"classes": rep.classes, "alpha": rep.alphas, "F_x": rep.at_x,
               "min_leaf_distance": rep.min_leaf_distance,
               "injectivity_ratio": rep.injectivity_ratio, "max_jump_ratio": rep.max_jump_ratio,
               "monotone": rep.monotone, "energy_defect": rep.energy_defect,
               "flagged": rep.flagged,
               "u": [v.u.ravel() for v in rep.values],
               "momenta": rep.sections}
    return payload, [
        _assert("energy identity", rep.energy_defect, 5e-3, rep.energy_defect < 5e-3),
        _assert("leaves disjoint", rep.min_leaf_distance, 0.0, rep.min_leaf_distance > 0),
        _assert("injective", rep.injectivity_ratio, 0.0, rep.injectivity_ratio > 0),
        _assert("no flagged classes", len(rep.flagged), 0, not rep.flagged)]


def task_acceptance(cfg, H, spec, echo=None):
    from .acceptance import run_criteria
    results = run_criteria(cfg.params.get("criteria"), echo=echo)
    payload = {"criteria": [r.to_dict() for r in results]}
    # runtimes vary between runs; keep the payload reproducible
    for c in payload["criteria"]:
        c.pop("runtime")
    return payload, [_assert(f"criterion {r.number}", r.passed, True, r.passed) for r in results]


TASKS = {"flow": task_flow, "minimize": task_minimize, "torus-periodic": task_torus,
         "green": task_green, "lyapunov": task_lyapunov, "kam": task_kam, "alpha": task_alpha,
         "foliation": task_foliation, "acceptance": task_acceptance}


def run(cfg, echo=None):
    """Run one configuration; TonelliError subclasses propagate to the caller."""
    if cfg.task not in TASKS:
        raise ConfigError(f"unknown task {cfg.task!r}")
    np.random.seed(cfg.seed)
    H = _model(cfg)
    spec = cfg.integrator_spec()
    t0 = time.perf_counter()
    try:
        if cfg.task == "acceptance":
            payload, asserts = task_acceptance(cfg, H, spec, echo=echo)
        else:
            payload, asserts = TASKS[cfg.task](cfg, H, spec)
    except TonelliError as exc:
        exc.info.setdefault("task", cfg.task)
        raise
    return RunReport(cfg, _clean(payload), asserts, time.perf_counter() - t0, H.n)


# ---------------------------------------------------------------------------
# regression comparison


def _walk(a, b, path, out, tolerances):
    if isinstance(a, dict) and isinstance(b, dict):
        for k in sorted(set(a) | set(b)):
            sub = f"{path}.{k}" if path else k
            if k not in a or k not in b:
                out.append({"path": sub, "a": a.get(k), "b": b.get(k), "diff": None, "tol": None})
            else:
                _walk(a[k], b[k], sub, out, tolerances)
    elif isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            out.append({"path": path, "a": len(a), "b": len(b), "diff": "length", "tol": None})
            return
        for i, (x, y) in enumerate(zip(a, b)):
            _walk(x, y, f"{path}[{i}]", out, tolerances)
    elif isinstance(a, (int, float)) and isinstance(b, (int, float)) \
            and not isinstance(a, bool) and not isinstance(b, bool):
        tol = _tolerance(path, tolerances)
        diff = abs(float(a) - float(b))
        if diff > tol or (tol == 0 and isinstance(a, float) and isinstance(b, float)):
            out.append({"path": path, "a": a, "b": b, "diff": diff, "tol": tol})
    elif a != b:
        out.append({"path": path, "a": a, "b": b, "diff": None, "tol": None})


def _tolerance(path, tolerances):
    """Most specific glob pattern matching the dotted path; '*' is the fallback."""
    best, best_len = tolerances.get("*", 0.0), -1
    bare = path.split("[")[0]
    for pattern, tol in tolerances.items():
        if pattern != "*" and (fnmatch.fnmatch(path, pattern) or fnmatch.fnmatch(bare, pattern)):
            if len(pattern) > best_len:
                best, best_len = tol, len(pattern)
    return float(best)


def compare(a, b, tolerances=None):
    """Fieldwise payload diff between two report dicts.

    Numeric fields differ when |a - b| exceeds the tolerance of the most
    specific matching pattern (glob on the dotted path, '*' as default).
    A zero tolerance flags every floating field, which is the sanity check
    that the comparison actually visits the floats. Returns the list of
    differing fields; empty means the reports agree.
    """
    if a.get("task") != b.get("task"):
        raise ConfigError("reports come from different tasks", a=a.get("task"), b=b.get("task"))
    tolerances = dict(tolerances or {})
    if not tolerances.get("*") and all(v != 0 for v in tolerances.values()):
        tolerances.setdefault("*", 1e-12)
    out = []
    _walk(a.get("payload", {}), b.get("payload", {}), "", out, tolerances)
    return out
