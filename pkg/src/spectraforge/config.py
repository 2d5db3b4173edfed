"""Run configuration: JSON schema, defaults, preset files and typed accessors."""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ConfigError

__all__ = ["RunConfig", "SCHEMA", "list_presets", "load_config", "load_preset"]

_NET = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "T": {"type": "integer", "minimum": 1},
        "M": {"type": "integer", "minimum": 1},
        "N": {"type": "integer", "minimum": 1},
        "hidden_act": {"enum": ["tanh"]},
        "out_act": {"enum": ["identity", "square"]},
    },
}

_POS = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["problem", "domain", "fields", "sampling", "training", "constraint"],
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "required": ["operator", "direction", "rho_lo", "rho_hi", "c_mean"],
            "properties": {
                "operator": {"enum": ["second_order", "clamped", "supported"]},
                "direction": {"enum": ["min", "max"]},
                "alpha": {"type": "number", "minimum": 0},
                "nu": {"type": "number", "minimum": -1, "maximum": 0.5},
                "rho_lo": {"type": "number"},
                "rho_hi": {"type": "number"},
                "c_mean": {"type": "number"},
                "A1": {"type": ["number", "null"]},
                "A2": {"type": ["number", "null"]},
                "S1": {"type": ["number", "null"]},
                "max_u_phase_sign": {"enum": [1, -1]},
            },
        },
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"type": "string"},
                "kind": {"enum": ["rectangle", "disk", "annulus", "dumbbell", "box3"]},
                "a1": {"type": "number"},
                "a2": {"type": "number"},
                "a3": {"type": "number"},
                "a4": {"type": "number"},
                "r": {"type": "number"},
                "r_in": {"type": "number"},
                "r_out": {"type": "number"},
                "c": {"type": "number"},
                "hh": {"type": "number"},
                "lo": {"type": "number"},
                "hi": {"type": "number"},
            },
            "oneOf": [{"required": ["preset"]}, {"required": ["kind"]}],
        },
        "fields": {
            "type": "object",
            "additionalProperties": False,
            "required": ["u_construction", "rho_construction"],
            "properties": {
                "u_construction": {"type": "string"},
                "rho_construction": {"type": "string"},
                "literal_paper_forms": {"type": "boolean"},
            },
        },
        "network_u": _NET,
        "network_rho": _NET,
        "sampling": {
            "type": "object",
            "additionalProperties": False,
            "required": ["grid"],
            "properties": {
                "grid": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 2, "maxItems": 3},
                "n_boundary": {"type": "integer", "minimum": 4},
            },
        },
        "training": {
            "type": "object",
            "additionalProperties": False,
            "required": ["K", "R", "T_u", "T_rho", "eta_u", "eta_rho"],
            "properties": {
                "K": {"type": "integer", "minimum": 1},
                "R": {"type": "integer", "minimum": 1},
                "T_u": {"type": "integer", "minimum": 1},
                "T_rho": {"type": "integer", "minimum": 1},
                "eta_u": _POS,
                "eta_rho": _POS,
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "constraint": {
            "type": "object",
            "additionalProperties": False,
            "required": ["method", "mu0"],
            "properties": {
                "method": {"enum": ["penalty", "aug_lagrangian"]},
                "mu0": _POS,
                "beta": {"type": "number", "exclusiveMinimum": 1},
                "S": _POS,
            },
        },
        "boundary": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["full", "half"]},
                "penalty_M": _POS,
            },
        },
    },
}

DEFAULTS = {
    "problem": {"alpha": 0.0, "nu": 0.3, "A1": None, "A2": None, "S1": None, "max_u_phase_sign": 1},
    "fields": {"literal_paper_forms": False},
    "network_u": {"T": 3, "M": 2, "N": 80, "hidden_act": "tanh", "out_act": "identity"},
    "network_rho": {"T": 3, "M": 2, "N": 80, "hidden_act": "tanh", "out_act": "identity"},
    "sampling": {"n_boundary": 256},
    "training": {"seed": 0},
    "constraint": {"beta": 2.0, "S": 1000.0},
    "boundary": {"mode": "full", "penalty_M": 1.0},
}


def _merge(defaults: dict, doc: dict) -> dict:
    out = copy.deepcopy(doc)
    for section, values in defaults.items():
        sec = out.setdefault(section, {})
        if isinstance(sec, dict):
            for k, v in values.items():
                sec.setdefault(k, v)
    return out


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration document (defaults filled in)."""

    doc: dict

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        try:
            jsonschema.validate(doc, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"invalid run config at {where}: {exc.message}") from None
        full = _merge(DEFAULTS, doc)
        p = full["problem"]
        if not p["rho_lo"] < p["c_mean"] < p["rho_hi"]:
            raise ConfigError("problem.c_mean must lie strictly between rho_lo and rho_hi")
        if p["operator"] == "supported" and full["boundary"]["mode"] != "half":
            raise ConfigError("the supported operator needs boundary.mode = 'half'")
        return cls(full)

    def section(self, name: str) -> dict:
        return copy.deepcopy(self.doc[name])

    @property
    def name(self) -> str:
        return self.doc.get("name", "run")

    @property
    def seed(self) -> int:
        return int(self.doc["training"]["seed"])

    def with_seed(self, seed: int) -> "RunConfig":
        doc = copy.deepcopy(self.doc)
        doc["training"]["seed"] = int(seed)
        return RunConfig.from_dict(doc)

    def override(self, **sections) -> "RunConfig":
        """Copy with section keys replaced, e.g. ``override(training={"K": 2})``."""
        doc = copy.deepcopy(self.doc)
        for sec, values in sections.items():
            doc.setdefault(sec, {}).update(values)
        return RunConfig.from_dict(doc)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.doc)


def load_config(path: str | Path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return RunConfig.from_dict(doc)


def _preset_dir():
    return resources.files("spectraforge") / "presets"


def list_presets() -> list[str]:
    names = [p.name[: -len(".json")] for p in _preset_dir().iterdir() if p.name.endswith(".json")]
    return sorted(names, key=_natural)


def _natural(name: str):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", name)]


def load_preset(name: str) -> RunConfig:
    path = _preset_dir() / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    return RunConfig.from_dict(json.loads(path.read_text()))
