"""Scenario files: JSON schema, validation and defaults.

Age functions are written as one of

    {"const": x}
    {"nodes": [a0, a1, ...], "values": [f0, f1, ...]}     linear interpolation,
                                                          constant outside
    {"exp": {"coef": c, "rate": r}}                        c * exp(r a)
    {"indicator": [lo, hi], "value": v, "left_open": b}    v on [lo, hi]
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .errors import ConfigError, InvalidArgument
from .grid import AgeGrid, AgeProfile, make_grid

TOL_MASS_REL = 1e-12

POSITIVE = {"type": "number", "exclusiveMinimum": 0}
NONNEG = {"type": "number", "minimum": 0}

AGE_FUNCTION = {
    "oneOf": [
        {"type": "object", "properties": {"const": {"type": "number"}}, "required": ["const"], "additionalProperties": False},
        {
            "type": "object",
            "properties": {
                "nodes": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            },
            "required": ["nodes", "values"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "exp": {
                    "type": "object",
                    "properties": {"coef": {"type": "number"}, "rate": {"type": "number"}},
                    "required": ["coef", "rate"],
                    "additionalProperties": False,
                }
            },
            "required": ["exp"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "indicator": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "value": {"type": "number"},
                "left_open": {"type": "boolean"},
            },
            "required": ["indicator"],
            "additionalProperties": False,
        },
    ]
}

MODULATION = {
    "type": "object",
    "properties": {"kind": {"enum": ["none", "reciprocal", "linear", "exp"]}, "rate": {"type": "number"}},
    "required": ["kind"],
    "additionalProperties": False,
}

CHECKS = ["sandwich", "conservation", "invariance", "monotone_pairs", "trajectory_monotone", "assumption_probe", "convergence"]
MODEL_CHECKS = {
    "sir": {"sandwich", "conservation", "invariance", "monotone_pairs", "assumption_probe", "convergence"},
    "hiv": {"sandwich", "conservation", "invariance", "monotone_pairs", "assumption_probe", "convergence"},
    "general": {"monotone_pairs", "trajectory_monotone", "assumption_probe", "convergence"},
}

SIR_PARAMS = {
    "type": "object",
    "properties": {
        "gamma_in": POSITIVE, "nu_S": POSITIVE, "eta": POSITIVE,
        "beta": {"$ref": "#/definitions/age_function"},
        "nu_I": {"$ref": "#/definitions/age_function"},
        "delta_floor": POSITIVE,
    },
    "required": ["gamma_in", "nu_S", "eta", "beta", "nu_I"],
    "additionalProperties": False,
}
HIV_PARAMS = {
    "type": "object",
    "properties": {
        "s": POSITIVE, "d": POSITIVE, "k": POSITIVE, "c": POSITIVE,
        "p": {"$ref": "#/definitions/age_function"},
        "delta": {"$ref": "#/definitions/age_function"},
        "delta0": POSITIVE,
    },
    "required": ["s", "d", "k", "c", "p", "delta"],
    "additionalProperties": False,
}
GENERAL_PARAMS = {
    "type": "object",
    "properties": {
        "mu0": {"$ref": "#/definitions/age_function"},
        "beta0": {"$ref": "#/definitions/age_function"},
        "alpha": {"$ref": "#/definitions/age_function"},
        "sigma": {"$ref": "#/definitions/age_function"},
        "mu_mod": {"$ref": "#/definitions/modulation"},
        "beta_mod": {"$ref": "#/definitions/modulation"},
        "gamma": POSITIVE,
    },
    "required": ["mu0", "beta0"],
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "agestruct scenario",
    "type": "object",
    "definitions": {"age_function": AGE_FUNCTION, "modulation": MODULATION},
    "properties": {
        "model": {"enum": ["sir", "hiv", "general"]},
        "grid": {
            "type": "object",
            "properties": {"a_max": POSITIVE, "n_cells": {"type": "integer", "minimum": 1}},
            "required": ["a_max", "n_cells"],
            "additionalProperties": False,
        },
        "horizon": NONNEG,
        "params": {"type": "object"},
        "initial": {"type": "object"},
        "checks": {"type": "array", "items": {"enum": CHECKS}, "uniqueItems": True},
        "seed": {"type": "integer"},
        "output_dir": {"type": ["string", "null"]},
        "tol_order": {"type": ["number", "null"], "minimum": 0},
        "tol_mass": {"type": ["number", "null"], "minimum": 0},
        "options": {
            "type": "object",
            "properties": {
                "sandwich_tol": {"type": ["number", "null"], "minimum": 0},
                "conservation_tol": POSITIVE,
                "conservation_horizon": POSITIVE,
                "pairs": {"type": "integer", "minimum": 1},
                "pairs_horizon": POSITIVE,
                "probe_samples": {"type": "integer", "minimum": 1},
                "probe_norm": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "expect": {"enum": ["Increasing", "Decreasing", "Neither", None]},
                "levels": {"type": "integer", "minimum": 2},
                "cert_slack": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
            "additionalProperties": False,
        },
    },
    "required": ["model", "grid", "horizon", "params", "initial"],
    "additionalProperties": False,
}

PARAM_SCHEMAS = {"sir": SIR_PARAMS, "hiv": HIV_PARAMS, "general": GENERAL_PARAMS}
INITIAL_SCHEMAS = {
    "sir": {
        "type": "object",
        "properties": {"S": NONNEG, "i": {"$ref": "#/definitions/age_function"}},
        "required": ["S", "i"],
        "additionalProperties": False,
    },
    "hiv": {
        "type": "object",
        "properties": {"T": NONNEG, "V": NONNEG, "i": {"$ref": "#/definitions/age_function"}},
        "required": ["T", "V", "i"],
        "additionalProperties": False,
    },
    "general": {
        "type": "object",
        "properties": {"u": {"$ref": "#/definitions/age_function"}},
        "required": ["u"],
        "additionalProperties": False,
    },
}

DEFAULT_OPTIONS = {
    "sandwich_tol": None,
    "conservation_tol": 0.1,
    "conservation_horizon": 2.0,
    "pairs": 20,
    "pairs_horizon": 2.0,
    "probe_samples": 32,
    "probe_norm": None,
    "expect": None,
    "levels": 3,
    "cert_slack": 0.1,
}


def full_schema() -> dict:
    """The documented schema, with the per-model blocks as conditionals."""
    s = copy.deepcopy(SCHEMA)
    s["allOf"] = [
        {
            "if": {"properties": {"model": {"const": m}}},
            "then": {"properties": {"params": PARAM_SCHEMAS[m], "initial": INITIAL_SCHEMAS[m]}},
        }
        for m in ("sir", "hiv", "general")
    ]
    return s


@dataclass
class Scenario:
    """A validated scenario; ``config`` is the input with every default filled in."""

    model: str
    grid: AgeGrid
    horizon: float
    params: dict
    initial: dict
    checks: list
    seed: int
    output_dir: str | None
    tol_order: float
    tol_mass: float | None
    options: dict
    config: dict = field(repr=False)

    def with_grid(self, n_cells: int) -> "Scenario":
        cfg = copy.deepcopy(self.config)
        cfg["grid"]["n_cells"] = int(n_cells)
        return parse_dict(cfg)


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path) if path else "/"


def _validate(doc, schema, prefix=()):
    validator = jsonschema.Draft7Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        best = jsonschema.exceptions.best_match([err]) or err
        path = _pointer(tuple(prefix) + tuple(best.absolute_path))
        raise ConfigError(best.message, path)


def age_function(block: dict):
    """Vectorized callable for an age-function block."""
    if "const" in block:
        v = float(block["const"])
        return lambda a: np.full(np.shape(a), v)
    if "nodes" in block:
        xs = np.asarray(block["nodes"], float)
        ys = np.asarray(block["values"], float)
        if xs.shape != ys.shape:
            raise ConfigError("nodes and values differ in length")
        if np.any(np.diff(xs) <= 0):
            raise ConfigError("nodes must be strictly increasing")
        return lambda a: np.interp(a, xs, ys)
    if "exp" in block:
        c, r = float(block["exp"]["coef"]), float(block["exp"]["rate"])
        return lambda a: c * np.exp(r * np.asarray(a, float))
    lo, hi = map(float, block["indicator"])
    v = float(block.get("value", 1.0))
    open_left = bool(block.get("left_open", False))
    eps = 1e-9 * max(1.0, abs(hi))

    def f(a):
        a = np.asarray(a, float)
        inside = (a > lo + eps) if open_left else (a >= lo - eps)
        return np.where(inside & (a <= hi + eps), v, 0.0)

    return f


def sample(grid: AgeGrid, block: dict) -> AgeProfile:
    return AgeProfile.from_function(grid, age_function(block))


def _check_signs(model, params, path):
    """Named errors for sign conditions the schema cannot express."""

    def lowest(name):
        block = params[name]
        if "const" in block:
            return float(block["const"])
        if "nodes" in block:
            return float(np.min(block["values"]))
        if "exp" in block:
            return min(0.0, float(block["exp"]["coef"]))
        return min(0.0, float(block.get("value", 1.0)))

    nonneg = {"sir": ["beta"], "hiv": ["p"], "general": ["mu0", "beta0", "alpha", "sigma"]}[model]
    for name in nonneg:
        if name in params and lowest(name) < 0:
            raise ConfigError(f"{name} must be nonnegative", f"{path}/{name}")
    rate = {"sir": "nu_I", "hiv": "delta"}.get(model)
    if rate and "exp" not in params[rate] and lowest(rate) <= 0:
        raise ConfigError(f"{rate} must be positive", f"{path}/{rate}")
    if rate and "exp" in params[rate] and params[rate]["exp"]["coef"] <= 0:
        raise ConfigError(f"{rate} must be positive", f"{path}/{rate}")


def parse_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be a JSON object", "/")
    _validate(doc, SCHEMA)
    model = doc["model"]
    _validate(doc["params"], {"definitions": SCHEMA["definitions"], **PARAM_SCHEMAS[model]}, ("params",))
    _validate(doc["initial"], {"definitions": SCHEMA["definitions"], **INITIAL_SCHEMAS[model]}, ("initial",))
    _check_signs(model, doc["params"], "/params")

    cfg = copy.deepcopy(doc)
    cfg.setdefault("checks", [])
    cfg.setdefault("seed", 0)
    cfg.setdefault("output_dir", None)
    if cfg.get("tol_order") is None:
        cfg["tol_order"] = 1e-9
    cfg.setdefault("tol_mass", None)
    opts = dict(DEFAULT_OPTIONS)
    opts.update(cfg.get("options", {}))
    cfg["options"] = opts
    if model == "general":
        prm = cfg["params"]
        prm.setdefault("alpha", {"const": 1.0})
        prm.setdefault("sigma", {"const": 1.0})
        prm.setdefault("mu_mod", {"kind": "none"})
        prm.setdefault("beta_mod", {"kind": "none"})
        for key in ("mu_mod", "beta_mod"):
            prm[key].setdefault("rate", 1.0)

    bad = [c for c in cfg["checks"] if c not in MODEL_CHECKS[model]]
    if bad:
        raise ConfigError(f"check {bad[0]!r} is not available for model {model!r}", "/checks")

    try:
        grid = make_grid(cfg["grid"]["a_max"], cfg["grid"]["n_cells"])
        grid.steps_for(cfg["horizon"])
    except InvalidArgument as exc:
        raise ConfigError(str(exc), "/horizon") from None
    if not math.isfinite(cfg["horizon"]):
        raise ConfigError("horizon must be finite", "/horizon")
    if cfg["tol_mass"] is None:
        ini = cfg["initial"]
        prof = sample(grid, ini["u"] if model == "general" else ini["i"])
        cfg["tol_mass"] = TOL_MASS_REL * (float(grid.weights @ prof.scalar) + float(ini.get("V", 0.0)))

    return Scenario(
        model=model,
        grid=grid,
        horizon=float(cfg["horizon"]),
        params=cfg["params"],
        initial=cfg["initial"],
        checks=list(cfg["checks"]),
        seed=int(cfg["seed"]),
        output_dir=cfg["output_dir"],
        tol_order=float(cfg["tol_order"]),
        tol_mass=cfg["tol_mass"],
        options=opts,
        config=cfg,
    )


def parse_config(text: str | bytes) -> Scenario:
    """Parse and validate a UTF-8 JSON scenario; errors carry a JSON pointer."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})", "/") from None
    return parse_dict(doc)


def dump_schema() -> str:
    return json.dumps(full_schema(), indent=2, sort_keys=True) + "\n"
