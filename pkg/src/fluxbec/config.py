"""Experiment configuration: JSON file, schema validation and defaults.

A user file only needs the keys it changes; it is merged over the shipped
defaults before validation. Unknown keys are rejected at every level. All
lengths, fields and times are in lab units named by the key suffix.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import replace
from importlib import resources

import jsonschema

from .chip import ChipSetup
from .constants import GAUSS, UM
from .errors import ConfigError
from .trap import AtomSpecies

SCHEMA_VERSION = "fluxbec.config/1"

_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "additionalProperties": False,
            "required": list(required)}


SCHEMA = _obj({
    "schema": {"const": SCHEMA_VERSION},
    "seed": {"type": "integer", "minimum": 0},
    "threads": {"type": "integer", "minimum": 1},
    "output_dir": {"type": "string", "minLength": 1},
    "species": _obj({
        "mass_kg": _pos,
        "mF_gF": {"type": "number"},
        "scattering_length_nm": _nonneg,
    }),
    "chip": _obj({
        "wire_current_A": _pos,
        "bar_length_mm": _pos,
        "lead_length_mm": _pos,
        "bias_x_G": _pos,
        "bottom_field_G": _pos,
        "trap_guess_um": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
    }),
    "loop": _obj({
        "radius_um": _pos,
        "wire_radius_um": _pos,
        "flux_fraction": _nonneg,
        "direction": {"enum": ["clockwise", "anticlockwise"]},
        "distance_um": _pos,
        "include_flux_bias": {"type": "boolean"},
    }),
    "profile": _obj({
        "window_um": _pos,
        "samples": {"type": "integer", "minimum": 11},
    }),
    "field": _obj({
        "half_width_um": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
        "counts": {"type": "array", "items": {"type": "integer", "minimum": 2},
                   "minItems": 2, "maxItems": 2},
    }),
    "sweep": _obj({
        "d_um": {"type": "array", "items": _pos, "minItems": 1},
    }),
    "dynamics": _obj({
        "grid_half_width_um": _pos,
        "grid_n": {"type": "integer", "minimum": 256},
        "ramp_duration_ms": _nonneg,
        "ramp_shape": {"enum": ["linear", "smoothstep"]},
        "omega_final_factor": _pos,
        "interactions": {"type": "boolean"},
        "N": {"type": "integer", "minimum": 1},
        "dt_us": {"anyOf": [_pos, {"type": "null"}]},
        "sample_every": {"type": "integer", "minimum": 1},
        "snapshot_times_ms": {"type": "array", "items": _nonneg},
    }),
    "tof": _obj({
        "expansion_time_ms": _pos,
        "conditionings": {"type": "array", "minItems": 1,
                          "items": {"enum": ["none", "loop0", "loop1", "plus", "minus"]}},
        "N_check": {"type": "array", "items": {"type": "integer", "minimum": 1}},
    }),
}, required=["schema"])


def default_config() -> dict:
    text = resources.files("fluxbec").joinpath("data/default_config.json").read_text()
    return json.loads(text)


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _where(err):
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def validate(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as err:
        raise ConfigError(f"config key '{_where(err)}': {err.message}") from None
    d = cfg["dynamics"]
    n = d["grid_n"]
    if n & (n - 1):
        raise ConfigError(f"config key 'dynamics.grid_n': {n} is not a power of two")
    loop = cfg["loop"]
    if not loop["wire_radius_um"] < loop["radius_um"] / 2:
        raise ConfigError("config key 'loop.wire_radius_um': must be below half the loop radius")
    return cfg


def load_config(path=None, overrides=None) -> dict:
    """Defaults, then the file at ``path`` (if any), then ``overrides``."""
    cfg = default_config()
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
        if "schema" not in user:
            raise ConfigError("config key 'schema': missing (expected "
                              f"\"{SCHEMA_VERSION}\")")
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    return validate(cfg)


def config_hash(cfg: dict) -> str:
    """sha256 of the canonical JSON, ignoring where outputs go."""
    body = {k: v for k, v in cfg.items() if k not in ("output_dir", "threads")}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def species_from(cfg) -> AtomSpecies:
    s = cfg["species"]
    return AtomSpecies(s["mass_kg"], s["mF_gF"], s["scattering_length_nm"] * 1e-9)


def setup_from(cfg) -> ChipSetup:
    c, l = cfg["chip"], cfg["loop"]
    return replace(
        ChipSetup(),
        wire_current=c["wire_current_A"],
        bar_length=c["bar_length_mm"] * 1e-3,
        lead_length=c["lead_length_mm"] * 1e-3,
        bias_x=c["bias_x_G"] * GAUSS,
        bottom_field=c["bottom_field_G"] * GAUSS,
        trap_guess=tuple(v * UM for v in c["trap_guess_um"]),
        loop_radius=l["radius_um"] * UM,
        wire_radius=l["wire_radius_um"] * UM,
        loop_distance=l["distance_um"] * UM,
        flux_fraction=l["flux_fraction"],
        direction=l["direction"],
        include_loop_bias=l["include_flux_bias"],
        species=species_from(cfg),
    )
