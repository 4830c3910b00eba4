"""Experiment configurations: JSON files validated against a shipped schema."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

import jsonschema

from .errors import ConfigError
from .integrators import IntegratorSpec

TASKS = ("flow", "minimize", "torus-periodic", "green", "lyapunov", "kam", "alpha",
         "foliation", "acceptance")


def load_schema(name="config"):
    text = resources.files("tonelli_lab").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def canonical_json(obj):
    """Deterministic JSON text: sorted keys, fixed separators."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def _format_error(err):
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    return f"{where}: {err.message}"


def validate(raw):
    """Validate a config mapping; raises ConfigError listing every violation."""
    schema = load_schema("config")
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if not errors and raw.get("task") in schema["$defs"]:
        sub = dict(schema["$defs"][raw["task"]])
        sub["$defs"] = schema["$defs"]
        task_validator = jsonschema.Draft202012Validator(sub)
        errors = [e for e in task_validator.iter_errors(raw.get("params", {}))]
        for e in errors:
            e.path.appendleft("params")
    if errors:
        lines = [_format_error(e) for e in errors]
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(lines), fields=lines)


def apply_overrides(raw, overrides):
    """Copy of ``raw`` with dotted keys (``params.grid``) set to new values."""
    raw = copy.deepcopy(raw)
    for key, value in overrides.items():
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override {key}: {part} is not an object")
        node[parts[-1]] = value
    return raw


@dataclass
class ExperimentConfig:
    task: str
    hamiltonian: dict = field(default_factory=lambda: {"name": "flat"})
    integrator: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    seed: int = 0
    output: str = None

    @classmethod
    def from_dict(cls, raw):
        validate(raw)
        raw = copy.deepcopy(raw)
        return cls(task=raw["task"], hamiltonian=raw.get("hamiltonian", {"name": "flat"}),
                   integrator=raw.get("integrator", {}), params=raw.get("params", {}),
                   seed=int(raw.get("seed", 0)), output=raw.get("output"))

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}",
                              line=exc.lineno, column=exc.colno) from None
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(raw)

    def to_dict(self):
        out = {"task": self.task, "hamiltonian": self.hamiltonian,
               "integrator": self.integrator, "params": self.params, "seed": self.seed}
        if self.output is not None:
            out["output"] = self.output
        return copy.deepcopy(out)

    def with_overrides(self, overrides):
        """New config with dotted-key overrides applied, re-validated."""
        return ExperimentConfig.from_dict(apply_overrides(self.to_dict(), overrides))

    def hash(self):
        """SHA-256 of the canonical JSON without the output path."""
        raw = self.to_dict()
        raw.pop("output", None)
        return hashlib.sha256(canonical_json(raw).encode()).hexdigest()

    def integrator_spec(self):
        """IntegratorSpec from the config, or None to keep each task's default."""
        return IntegratorSpec(**self.integrator) if self.integrator else None
