"""Run configuration: one JSON document, schema-checked, with defaults filled in.

The fingerprint is the sha256 of the canonical JSON of the effective
configuration with the ``output`` section removed, so moving output files
around does not change it while any change of physics or sampling does.
"""

from __future__ import annotations

import copy
import hashlib
import json

import jsonschema

from .boundary import SolverOptions
from .gas import GasModel, GridSpec
from .potential import Potential, RadialProfile

__all__ = ["SCHEMA", "DEFAULTS", "ConfigError", "RunConfig", "load_config", "canonical_json"]


class ConfigError(ValueError):
    pass


_number = {"type": "number"}
_complex = {"oneOf": [_number, {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}]}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "potential": {
            "type": "object",
            "additionalProperties": False,
            "required": ["radial"],
            "properties": {
                "radial": {
                    "oneOf": [
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["kind"],
                            "properties": {
                                "kind": {"const": "power"},
                                "C": {"type": "number", "exclusiveMinimum": 0},
                                "b": {"type": "number", "exclusiveMinimum": 0},
                            },
                        },
                        {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["kind", "alphas"],
                            "properties": {
                                "kind": {"const": "generalized"},
                                "alphas": {"type": "array", "items": _number, "minItems": 1},
                                "coupling": {"type": "number", "exclusiveMinimum": 0},
                            },
                        },
                    ]
                },
                "poly": {"type": "array", "items": _complex},
                "domain_radius": {"type": ["number", "null"], "exclusiveMinimum": 0},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "M": {"type": "integer", "minimum": 16},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "continuation_steps": {"type": "integer", "minimum": 1},
                "curve_points": {"type": "integer", "minimum": 3},
                "max_subdivisions": {"type": "integer", "minimum": 0},
            },
        },
        "sampler": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "N": {"type": "integer", "minimum": 1},
                "sweeps": {"type": "integer", "minimum": 1},
                "burn_in": {"type": "integer", "minimum": 0},
                "thin": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "chains": {"type": "integer", "minimum": 1},
                "model": {"enum": ["standard", "generalized"]},
                "planar_measure": {"type": "boolean"},
                "checkpoint_every": {"type": ["integer", "null"], "minimum": 1},
            },
        },
        "density": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "center": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2},
                "extent": {"type": "number", "exclusiveMinimum": 0},
                "n": {"type": "integer", "minimum": 1},
            },
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol_inside": {"type": "number", "exclusiveMinimum": 0},
                "tol_outside": {"type": "number", "exclusiveMinimum": 0},
                "tol_contour": {"type": "number", "exclusiveMinimum": 0},
                "eps": {"type": "number", "minimum": 0},
                "max_outside_fraction": {"type": "number", "minimum": 0},
                "max_centroid_error": {"type": "number", "minimum": 0},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "boundary": {"type": "string"},
                "snapshots": {"type": "string"},
                "density": {"type": "string"},
                "report": {"type": "string"},
                "svg": {"type": "string"},
            },
        },
    },
    "required": ["potential"],
}

DEFAULTS = {
    "potential": {"poly": [], "domain_radius": None},
    "solver": {"M": 1024, "tol": 1e-10, "max_iter": 50, "continuation_steps": 8,
               "curve_points": 512, "max_subdivisions": 6},
    "sampler": {"N": 64, "sweeps": 20000, "burn_in": 5000, "thin": 100, "seed": 0, "chains": 1,
                "model": "standard", "planar_measure": False, "checkpoint_every": None},
    "density": {"center": [0.0, 0.0], "extent": 2.0, "n": 64},
    "verify": {"tol_inside": 5e-3, "tol_outside": 5e-3, "tol_contour": 1e-6, "eps": 0.15,
               "max_outside_fraction": 0.02, "max_centroid_error": 0.05},
    "output": {},
}
_RADIAL_DEFAULTS = {"power": {"C": 1.0, "b": 1.0}, "generalized": {"coupling": 1.0}}


def canonical_json(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _as_pair(c):
    if isinstance(c, list):
        return [float(c[0]), float(c[1])]
    return [float(c), 0.0]


class RunConfig:
    """Validated configuration with defaults applied."""

    def __init__(self, doc):
        try:
            jsonschema.validate(doc, SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config error at {path}: {exc.message}") from None
        eff = copy.deepcopy(DEFAULTS)
        for key, val in doc.items():
            eff[key].update(copy.deepcopy(val))
        radial = eff["potential"]["radial"]
        for k, v in _RADIAL_DEFAULTS[radial["kind"]].items():
            radial.setdefault(k, v)
        eff["potential"]["poly"] = [_as_pair(c) for c in eff["potential"]["poly"]]
        if not eff["sampler"]["sweeps"] > eff["sampler"]["burn_in"]:
            raise ConfigError("config error at sampler: sweeps must exceed burn_in")
        if eff["sampler"]["model"] == "generalized" and radial["kind"] != "generalized":
            raise ConfigError("config error at sampler/model: generalized sampling needs a generalized radial profile")
        self.doc = eff

    def override(self, section, key, value):
        """Apply a command-line override and revalidate."""
        if value is None:
            return self
        doc = copy.deepcopy(self.doc)
        doc[section][key] = value
        return RunConfig(doc)

    @property
    def fingerprint(self):
        body = {k: v for k, v in self.doc.items() if k != "output"}
        return hashlib.sha256(canonical_json(body).encode()).hexdigest()

    def profile(self):
        r = self.doc["potential"]["radial"]
        if r["kind"] == "power":
            return RadialProfile.power(r["C"], r["b"])
        return RadialProfile.generalized(r["alphas"], r["coupling"])

    def potential(self):
        p = self.doc["potential"]
        return Potential(self.profile(), tuple(complex(x, y) for x, y in p["poly"]), p["domain_radius"])

    def solver_options(self):
        return SolverOptions(**self.doc["solver"])

    def gas_model(self):
        s = self.doc["sampler"]
        if s["model"] == "standard":
            return GasModel.standard()
        return GasModel.generalized(self.profile(), planar_measure=s["planar_measure"])

    def grid(self):
        d = self.doc["density"]
        return GridSpec(complex(*d["center"]), float(d["extent"]), int(d["n"]))

    def __getitem__(self, key):
        return self.doc[key]


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return RunConfig(doc)
