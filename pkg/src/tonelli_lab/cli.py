"""Command line entry point: ``tonelli-lab <task> --config <path> [overrides]``.

Exit codes: 0 when every attached assertion passes, 1 for configuration
errors, 2 for numerical failures, 3 when a hypothesis is violated and 4
when the run completed but an assertion failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from . import fourier
from .config import TASKS, ExperimentConfig, apply_overrides, canonical_json
from .errors import ConfigError, TonelliError

EXIT_ASSERTION = 4

# shortcut flags and the task parameter they set
SHORTCUTS = {
    "x": "vector", "p": "vector", "y": "vector", "t": "float", "T": "float", "r": "ivector",
    "c": "vector", "grid": "int", "tau": "float", "horizon": "float", "c_grid": "classes",
    "m_values": "ivector", "kappa": "float", "omega": "omega", "mode": "str",
    "criteria": "ivector", "momenta": "str", "levels": "int", "conjugate_t_max": "float",
}


def _vector(text, cast=float):
    return [cast(v) for v in text.replace(" ", "").split(",") if v]


def _classes(text):
    """'lo:hi:count' for a 1-D segment, or ';'-separated vectors."""
    if ":" in text:
        lo, hi, count = text.split(":")
        return [[float(v)] for v in np.linspace(float(lo), float(hi), int(count))]
    return [_vector(part) for part in text.split(";") if part.strip()]


def _parse(kind, text):
    if kind == "vector":
        return _vector(text)
    if kind == "ivector":
        return _vector(text, int)
    if kind == "float":
        return float(text)
    if kind == "int":
        return int(text)
    if kind == "classes":
        return _classes(text)
    if kind == "omega":
        return text if text.isalpha() else _vector(text)
    return text


def _set_value(text):
    key, sep, value = text.partition("=")
    if not sep:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def build_parser():
    ap = argparse.ArgumentParser(prog="tonelli-lab", allow_abbrev=False,
                                 description="Numerical experiments on Tonelli Hamiltonians.")
    ap.add_argument("task", choices=list(TASKS) + ["compare"])
    ap.add_argument("reports", nargs="*", help="two report files (compare only)")
    ap.add_argument("--config", help="JSON experiment configuration")
    ap.add_argument("--hamiltonian", help="catalogue model name")
    ap.add_argument("--n", type=int, help="torus dimension")
    ap.add_argument("--h", type=float, help="integrator step")
    ap.add_argument("--scheme", choices=["auto", "verlet", "midpoint"])
    ap.add_argument("--seed", type=int)
    ap.add_argument("--output", help="write the JSON report here instead of stdout")
    ap.add_argument("--csv", help="also write flattened sections as CSV")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                    help="dotted override, e.g. params.grid=128")
    ap.add_argument("--tol", action="append", default=[], metavar="PATTERN=TOL",
                    help="compare: tolerance for fields matching a glob pattern")
    ap.add_argument("--quiet", action="store_true")
    for name, kind in SHORTCUTS.items():
        flag = "--" + name.replace("_", "-")
        ap.add_argument(flag, dest="short_" + name, metavar=kind.upper())
    return ap


def make_config(args):
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        if cfg.task != args.task:
            raise ConfigError(f"config is for task {cfg.task!r}, not {args.task!r}")
        raw = cfg.to_dict()
    else:
        raw = {"task": args.task, "hamiltonian": {"name": "flat"}, "params": {}}
    overrides = {}
    if args.hamiltonian:
        overrides["hamiltonian.name"] = args.hamiltonian
    if args.n is not None:
        overrides["hamiltonian.n"] = args.n
    if args.h is not None:
        overrides["integrator.h"] = args.h
    if args.scheme:
        overrides["integrator.scheme"] = args.scheme
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.output:
        overrides["output"] = args.output
    for name, kind in SHORTCUTS.items():
        value = getattr(args, "short_" + name)
        if value is not None:
            try:
                overrides["params." + name] = _parse(kind, value)
            except ValueError as exc:
                raise ConfigError(f"--{name.replace('_', '-')}: {exc}") from None
    for item in args.set:
        key, value = _set_value(item)
        overrides[key] = value
    return ExperimentConfig.from_dict(apply_overrides(raw, overrides))


def csv_rows(task, payload, n):
    """Header and rows of the 1-D sections of a payload, row-major over grids."""
    def idx(prefix, k):
        return [f"{prefix}{i + 1}" for i in range(k)]

    if task == "torus-periodic":
        X = np.asarray(payload["sections"]["X"]).reshape(-1, n)
        P = np.asarray(payload["sections"]["P"]).reshape(-1, n)
        theta = fourier.grid_points(payload["grid"], n)
        return idx("theta", n) + idx("X", n) + idx("P", n), np.hstack([theta, X, P])
    if task == "alpha":
        u = np.asarray(payload["u"])
        theta = fourier.grid_points(payload["grid"], n)
        mom = np.asarray(payload["momenta"]).reshape(-1, n)
        mask = np.asarray(payload["aubry_mask"], float)[:, None]
        return (idx("theta", n) + ["u", "aubry"] + idx("p", n),
                np.hstack([theta, u[:, None], mask, mom]))
    if task == "foliation":
        c = np.asarray(payload["classes"])
        F = np.asarray(payload["F_x"])
        a = np.asarray(payload["alpha"])[:, None]
        return idx("c", n) + idx("F", n) + ["alpha"], np.hstack([c, F, a])
    if task == "minimize":
        recs = payload["path"]
        return (["t"] + idx("x", n) + idx("v", n),
                np.array([[r["t"]] + r["x"] + r["v"] for r in recs]))
    if task == "lyapunov":
        ex = np.asarray(payload["exponents"])
        return ["index", "exponent"], np.column_stack([np.arange(len(ex)), ex])
    if task == "kam":
        if "members" in payload:
            rows = [[m["m"], m["residual"], m["rotation_error"], m["c0_distance"]]
                    for m in payload["members"]]
            return ["m", "residual", "rotation_error", "c0_distance"], np.array(rows)
        u = np.asarray(payload["u"])
        eta = np.arange(len(u)) / len(u)
        return ["eta", "u", "v"], np.column_stack([eta, u, payload["v"]])
    if task == "acceptance":
        rows = [[c["number"], int(c["passed"]), len(c["checks"])] for c in payload["criteria"]]
        return ["criterion", "passed", "checks"], np.array(rows)
    if task == "flow":
        return idx("x", n) + idx("p", n), np.hstack([payload["x"], payload["p"]])[None]
    rows = []
    for side in ("plus", "minus"):
        lim = payload.get(side, {}).get("limit")
        if isinstance(lim, list):
            for i, row in enumerate(lim):
                rows.extend([[1 if side == "plus" else -1, i, j, v] for j, v in enumerate(row)])
    return ["sign", "i", "j", "S"], np.array(rows)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in np.atleast_2d(rows):
            w.writerow([repr(float(v)) for v in row])


def _compare(args):
    from .runner import compare
    if len(args.reports) != 2:
        raise ConfigError("compare needs exactly two report files")
    reports = []
    for path in args.reports:
        try:
            with open(path) as fh:
                reports.append(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read report {path}: {exc}") from None
    tols = {}
    for item in args.tol:
        key, value = _set_value(item)
        tols[key] = float(value)
    diff = compare(reports[0], reports[1], tols)
    print(canonical_json({"differences": diff}))
    return 0 if not diff else EXIT_ASSERTION


def _limit_threads():
    threads = os.environ.get("TONELLI_THREADS")
    if not threads:
        return None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=int(threads))


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    limiter = _limit_threads()
    try:
        if args.task == "compare":
            return _compare(args)
        cfg = make_config(args)
        from .runner import run
        echo = None if args.quiet else (lambda s: print(s, file=sys.stderr))
        report = run(cfg, echo=echo)
        text = report.to_json()
        if cfg.output:
            with open(cfg.output, "w") as fh:
                fh.write(text + "\n")
        else:
            print(text)
        if args.csv:
            header, rows = csv_rows(cfg.task, report.payload, report.n)
            write_csv(args.csv, header, rows)
        for a in report.assertions:
            if not a["passed"]:
                print(f"assertion failed: {a['name']} (value {a['value']}, limit {a['limit']})",
                      file=sys.stderr)
        return 0 if report.passed else EXIT_ASSERTION
    except TonelliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for k, v in sorted(exc.info.items()):
            if k != "data":
                print(f"  {k}: {v}", file=sys.stderr)
        return exc.exit_code
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
