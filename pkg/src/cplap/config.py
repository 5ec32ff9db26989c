"""Experiment configuration: a versioned JSON schema with strict keys."""
from __future__ import annotations

import copy
import json

import numpy as np

from . import coefficients as co
from .mesh import RectGrid
from .problems import Problem, manufactured_source, sine_bump, sine_bump_grad
from .structure import FluxParams

SCHEMA_VERSION = 1
KINDS = ("solve", "structure-test", "sensitivity", "regularity", "convergence-study")


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "kind": "solve",
    "problem": {
        "p": 2.0,
        "eps": 0.5,
        "N": 1,
        "grid": [32, 32],
        "domain": [[0.0, 1.0], [0.0, 1.0]],
        "nu": 0.05,
        "L": 2.0,
        "coefficient": {"name": "constant", "params": {"value": [1.0, 0.0]}},
        "source": {"name": "zero", "params": {}},
        "boundary": {"name": "zero", "params": {}},
    },
    "run": {
        "tol": 1e-10,
        "max_picard": 200,
        "max_newton": 50,
        "eps0_floor": False,
        "seed": None,
        "samples": 10000,
        "p_list": [1.2, 1.5, 2.0, 3.0, 4.5],
        "eps_list": [0.0, 0.1, 1.0],
        "shapes": [[1, 2], [2, 2], [3, 3]],
        "z": [0.0, 0.0],
        "theta": [1.0, 0.0],
        "t_list": [1e-1, 1e-2, 1e-3, 1e-4],
        "h_list": [1e-1, 5e-2, 2.5e-2, 1.25e-2],
        "family": {"name": "affine_z", "params": {"a1": [0.2, 0.1], "radius": 0.5}},
        "center": [0.5, 0.5],
        "radii": [0.25, 0.125, 0.0625, 0.03125, 0.015625],
        "input": None,
        "meshes": [8, 16, 32, 64],
    },
    "output": "cplap-out",
}

_REQUIRED_BY_KIND = {"structure-test": ["seed"]}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown key {path + k!r}")
        if isinstance(base[k], dict) and k not in ("params",) and isinstance(v, dict) and not _is_selection(base[k]):
            out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = copy.deepcopy(v)
    return out


def _is_selection(d: dict) -> bool:
    return set(d) == {"name", "params"}


def as_complex(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError(f"complex values are [re, im] pairs, got {v}")
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, str):
        return complex(v.replace(" ", ""))
    return complex(v)


def load(path) -> dict:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return resolve(raw)


def resolve(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    ver = raw.get("schema_version", SCHEMA_VERSION)
    if ver != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {ver}")
    cfg = _merge(DEFAULTS, raw)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    kind = cfg["kind"]
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    pb = cfg["problem"]
    p, eps = float(pb["p"]), float(pb["eps"])
    if not p > 1:
        raise ConfigError(f"p must exceed 1, got {p}")
    if not 0 <= eps <= 1:
        raise ConfigError(f"eps must lie in [0, 1], got {eps}")
    if kind == "sensitivity" and not 0 < eps < 1:
        raise ConfigError("sensitivity needs eps in (0, 1): differentiability of the solution map "
                          "is only established for a regularized flux")
    for key in _REQUIRED_BY_KIND.get(kind, []):
        if cfg["run"][key] is None:
            raise ConfigError(f"run.{key} is mandatory for kind {kind!r}")
    for sel, reg in (("coefficient", COEFFICIENTS), ("source", SOURCES), ("boundary", BOUNDARIES)):
        name = pb[sel].get("name")
        if name not in reg:
            raise ConfigError(f"unknown {sel} family {name!r}; known: {sorted(reg)}")
        _check_selection(pb[sel], f"problem.{sel}", sel)
    fam = cfg["run"]["family"]["name"]
    if fam not in FAMILIES:
        raise ConfigError(f"unknown parametric family {fam!r}; known: {sorted(FAMILIES)}")
    _check_selection(cfg["run"]["family"], "run.family", "family")
    if len(pb["grid"]) != 2 or min(pb["grid"]) < 1:
        raise ConfigError(f"grid must be [nx, ny] with positive entries, got {pb['grid']}")
    if not 0 < pb["nu"] < pb["L"]:
        raise ConfigError("need 0 < nu < L")


PARAM_KEYS = {
    "coefficient": {"constant": {"value"}, "affine_x": {"c0", "c1", "c2"}, "cosine": {"base", "amp", "k", "axis"},
                    "rough": {"base", "amp", "alpha", "center", "axis"}},
    "source": {"zero": set(), "constant": {"value"}, "smooth": {"amp", "k"}, "manufactured": set()},
    "boundary": {"zero": set(), "constant": {"value"}, "affine": {"c0", "c1", "c2"}, "manufactured": set()},
    "family": {"affine_z": {"a1", "radius", "center"}, "exponential_z": {"radius", "center", "shift"}},
}


def _check_selection(sel: dict, where: str, group: str) -> None:
    unknown = set(sel) - {"name", "params"}
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    bad = set(sel.get("params", {})) - PARAM_KEYS[group][sel["name"]]
    if bad:
        raise ConfigError(f"unknown parameters for {where} {sel['name']!r}: {sorted(bad)}")


# Family builders.  Each takes (params dict, problem block) and returns an object.

def _coef_constant(prm, pb):
    return co.constant(as_complex(prm.get("value", 1.0)), pb["nu"], pb["L"])


def _coef_affine(prm, pb):
    return co.affine_x(as_complex(prm.get("c0", 1.0)), as_complex(prm.get("c1", 0.0)),
                       as_complex(prm.get("c2", 0.0)), pb["nu"], pb["L"])


def _coef_cosine(prm, pb):
    return co.cosine(as_complex(prm.get("base", 1.0)), as_complex(prm.get("amp", [0.0, 0.3])),
                     float(prm.get("k", 1.0)), pb["nu"], pb["L"], int(prm.get("axis", 0)))


def _coef_rough(prm, pb):
    return co.rough(as_complex(prm.get("base", 1.0)), as_complex(prm.get("amp", 0.3)), float(prm.get("alpha", 0.3)),
                    float(prm.get("center", 0.5)), pb["nu"], pb["L"], int(prm.get("axis", 0)))


COEFFICIENTS = {"constant": _coef_constant, "affine_x": _coef_affine, "cosine": _coef_cosine, "rough": _coef_rough}


def _src_manufactured(prm, pb, a):
    if pb["N"] != 1:
        raise ConfigError("the manufactured source is scalar (N = 1)")
    return manufactured_source(a, FluxParams(pb["p"], pb["eps"]), sine_bump_grad)


SOURCES = {
    "zero": lambda prm, pb, a: co.zero_source(pb["N"]),
    "constant": lambda prm, pb, a: co.constant_source(
        np.array([[as_complex(v) for v in row] for row in prm.get("value", [[1.0, 0.0]] * pb["N"])]), pb["N"]),
    "smooth": lambda prm, pb, a: co.smooth_source(as_complex(prm.get("amp", 1.0)), float(prm.get("k", 1.0)), pb["N"]),
    "manufactured": _src_manufactured,
}


def _bnd_affine(prm, pb):
    c0, c1, c2 = (as_complex(prm.get(k, 0.0)) for k in ("c0", "c1", "c2"))
    N = pb["N"]
    return lambda x: np.repeat((c0 + c1 * x[..., 0] + c2 * x[..., 1])[..., None], N, axis=-1)


def _bnd_constant(prm, pb):
    c = as_complex(prm.get("value", 0.0))
    N = pb["N"]
    return lambda x: np.full((*np.shape(x)[:-1], N), c)


BOUNDARIES = {
    "zero": lambda prm, pb: None,
    "constant": _bnd_constant,
    "affine": _bnd_affine,
    "manufactured": lambda prm, pb: None,  # the sine bump vanishes on the unit square boundary
}


def _fam_affine(prm, pb, a0):
    a1 = co.constant(as_complex(prm.get("a1", [0.2, 0.1])), 1e-3, 1.0)
    region = co.Disk(as_complex(prm.get("center", 0.0)), float(prm.get("radius", 0.5)))
    return co.affine_z(a0, a1, region, pb["nu"], pb["L"])


def _fam_exponential(prm, pb, a0):
    region = co.Disk(as_complex(prm.get("center", 0.0)), float(prm.get("radius", 0.3)))
    return co.exponential_z(a0, region, pb["nu"], pb["L"], as_complex(prm.get("shift", 0.0)))


FAMILIES = {"affine_z": _fam_affine, "exponential_z": _fam_exponential}


def build_problem(cfg: dict) -> Problem:
    pb = cfg["problem"]
    grid = RectGrid(tuple(tuple(b) for b in pb["domain"]), tuple(pb["grid"]))
    params = FluxParams(float(pb["p"]), float(pb["eps"]))
    a = COEFFICIENTS[pb["coefficient"]["name"]](pb["coefficient"].get("params", {}), pb)
    F = SOURCES[pb["source"]["name"]](pb["source"].get("params", {}), pb, a)
    g = BOUNDARIES[pb["boundary"]["name"]](pb["boundary"].get("params", {}), pb)
    exact = exact_grad = None
    if pb["source"]["name"] == "manufactured":
        exact, exact_grad = (lambda x: sine_bump(x)[..., None]), sine_bump_grad
    return Problem(grid, a, params, F, g, exact, exact_grad, cfg["kind"])


def build_family(cfg: dict, a0):
    fam = cfg["run"]["family"]
    return FAMILIES[fam["name"]](fam.get("params", {}), cfg["problem"], a0)
