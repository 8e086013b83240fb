"""Experiment configuration: JSON schema, validation and translation into study objects."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Any

import jsonschema
import numpy as np

from . import analysis, kl
from .expressions import ExpressionError, compile_vector, complex_step_gradient, Expression
from .material import MaterialLaw
from .mesh import QuadMesh, from_arrays, generate_irregular, generate_rectangular, load_mesh, refine
from .stochastic_basis import (
    StochasticBasis,
    build_gpc,
    build_k_version,
    build_p_version,
    deterministic_basis,
    make_distribution,
)

SIDES = ["left", "right", "bottom", "top"]

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}
_expr = {"type": ["string", "number"]}
_expr2 = {"type": "array", "items": _expr, "minItems": 2, "maxItems": 2}
_nu = {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5}
_interval = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

_variable = {
    "oneOf": [
        {"type": "object", "additionalProperties": False, "required": ["dist", "a", "b"],
         "properties": {"dist": {"const": "uniform"}, "a": _num, "b": _num}},
        {"type": "object", "additionalProperties": False, "required": ["dist"],
         "properties": {"dist": {"const": "normal"}}},
    ]
}

_kernel = {
    "type": "object", "additionalProperties": False, "required": ["kind"],
    "properties": {
        "kind": {"enum": ["exponential", "squared_exponential"]},
        "variance": {"type": "number", "minimum": 0},
        "length": {"type": "number", "exclusiveMinimum": 0},
    },
}

_mesh = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "families": {"type": "array", "items": {"enum": ["rectangular", "irregular"]}, "minItems": 1},
        "levels": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "base": {"type": "array", "items": _pos_int, "minItems": 2, "maxItems": 2},
        "dirichlet_sides": {"type": "array", "items": {"enum": SIDES}},
        "file": {"type": "string"},
    },
}

_material = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "mode": {"enum": ["plane_stress", "plane_strain"]},
        "nu": {"type": "array", "items": _nu, "minItems": 1},
    },
}

_basis = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["p_version", "k_version", "gpc", "deterministic"]},
        "degrees": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
        "partitions": {"oneOf": [_pos_int, {"type": "array", "items": _pos_int}]},
        "total_degree": {"type": "boolean"},
    },
}

_quadrature = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "spatial": {"type": ["integer", "null"], "minimum": 2},
        "assembly_stochastic": {"type": ["integer", "null"], "minimum": 1},
        "error_spatial": {"type": "integer", "minimum": 2},
        "error_stochastic": {"type": "integer", "minimum": 1},
    },
}

_row = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "label": {"type": "string"},
        "scheme": {"enum": ["ps_hybrid", "bilinear"]},
        "solver": {"enum": ["galerkin", "per_sample"]},
        "recovery": {"enum": ["galerkin", "per_sample"]},
        "basis": _basis,
        "material": _material,
        "mesh": _mesh,
        "quadrature": _quadrature,
    },
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["task"],
    "properties": {
        "task": {"enum": ["convergence", "stability", "kl"]},
        "title": {"type": "string"},
        "description": {"type": "string"},
        "domain": {"type": "array", "items": _interval, "minItems": 2, "maxItems": 2},
        "mesh": _mesh,
        "material": _material,
        "field": {
            "type": "object", "additionalProperties": False, "required": ["kind", "variables"],
            "properties": {
                "kind": {"enum": ["explicit", "kl"]},
                "variables": {"type": "array", "items": _variable},
                "E": _expr,
                "e_bounds": {"type": "array", "minItems": 2, "maxItems": 2,
                             "prefixItems": [{"type": "number", "exclusiveMinimum": 0},
                                             {"type": ["number", "null"], "exclusiveMinimum": 0}]},
                "mean": _expr,
                "kernel": _kernel,
                "n_terms": {"type": "integer", "minimum": 0},
                "n_quad": _pos_int,
                "axes": {"type": "array", "items": {"enum": [0, 1]}, "minItems": 1, "maxItems": 2},
            },
        },
        "loads": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "f": _expr2,
                "g": {"type": "object", "propertyNames": {"enum": SIDES + ["*"]},
                      "additionalProperties": _expr2},
            },
        },
        "exact": {
            "oneOf": [
                {"type": "object", "additionalProperties": False, "required": ["kind"],
                 "properties": {"kind": {"const": "bending"}}},
                {"type": "object", "additionalProperties": False, "required": ["u"],
                 "properties": {"u": _expr2,
                                "sigma": {"type": "array", "items": _expr, "minItems": 3, "maxItems": 3}}},
            ]
        },
        "basis": _basis,
        "scheme": {"enum": ["ps_hybrid", "bilinear"]},
        "solver": {"enum": ["galerkin", "per_sample"]},
        "recovery": {"enum": ["galerkin", "per_sample"]},
        "quadrature": _quadrature,
        "study": {"type": "array", "items": _row},
        "stability": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "lambdas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "mesh": {"type": "array", "items": _pos_int, "minItems": 2, "maxItems": 2},
                "degree": {"type": "integer", "minimum": 0},
                "mode": {"enum": ["plane_stress", "plane_strain"]},
                "patch": {"type": "boolean"},
            },
        },
        "kl": {
            "type": "object", "additionalProperties": False, "required": ["kernel"],
            "properties": {
                "kernel": _kernel,
                "interval": _interval,
                "n_modes": _pos_int,
                "n_quad": _pos_int,
                "panel_points": _pos_int,
            },
        },
        "output": {"type": "object", "additionalProperties": False, "properties": {"dir": {"type": "string"}}},
    },
}

DEFAULTS: dict[str, Any] = {
    "domain": [[0.0, 10.0], [-1.0, 1.0]],
    "mesh": {"families": ["rectangular"], "levels": [0, 1, 2, 3], "base": [5, 1], "dirichlet_sides": ["left"]},
    "material": {"mode": "plane_stress", "nu": [0.25]},
    "basis": {"kind": "p_version", "degrees": [1], "partitions": 1, "total_degree": True},
    "scheme": "ps_hybrid",
    "solver": "galerkin",
    "recovery": "galerkin",
    "quadrature": {"spatial": None, "assembly_stochastic": None, "error_spatial": 4, "error_stochastic": 20},
}


class ConfigError(ValueError):
    pass


def validate(cfg: dict) -> dict:
    """Schema plus semantic checks; returns the config unchanged."""
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {err.message}") from None
    field = cfg.get("field")
    if field:
        for i, v in enumerate(field["variables"]):
            if v["dist"] == "uniform" and not v["a"] < v["b"]:
                raise ConfigError(f"field/variables/{i}: uniform range needs a < b")
        if field["kind"] == "explicit" and "E" not in field:
            raise ConfigError("field: explicit fields need an 'E' expression")
        if field["kind"] == "kl" and "kernel" not in field:
            raise ConfigError("field: KL fields need a 'kernel'")
        bounds = field.get("e_bounds")
        if bounds and bounds[1] is not None and bounds[1] < bounds[0]:
            raise ConfigError("field/e_bounds: upper bound below lower bound")
    if cfg["task"] == "convergence":
        for key in ("field", "exact"):
            if key not in cfg:
                raise ConfigError(f"convergence studies need '{key}'")
    if cfg["task"] == "kl" and "kl" not in cfg:
        raise ConfigError("kl task needs a 'kl' section")
    n = len(field["variables"]) if field else 0
    try:
        _compile_all(cfg, n)
    except ExpressionError as err:
        raise ConfigError(str(err)) from None
    return cfg


def _compile_all(cfg: dict, n: int) -> None:
    field = cfg.get("field") or {}
    for key in ("E", "mean"):
        if key in field:
            Expression(field[key], n)
    loads = cfg.get("loads") or {}
    if "f" in loads:
        compile_vector(loads["f"], n)
    for comps in (loads.get("g") or {}).values():
        compile_vector(comps, n)
    exact = cfg.get("exact") or {}
    for key in ("u", "sigma"):
        if key in exact:
            compile_vector(exact[key], n)


def merged(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merged(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def with_defaults(cfg: dict) -> dict:
    return merged(DEFAULTS, cfg)


# ---------------------------------------------------------------------------
# builders


def build_model(cfg: dict) -> kl.RandomFieldModel:
    field = cfg["field"]
    dists = tuple(make_distribution(v) for v in field["variables"])
    n = len(dists)
    domain = tuple(tuple(float(v) for v in iv) for iv in cfg["domain"])
    bounds = field.get("e_bounds")
    e_bounds = None if bounds is None else (float(bounds[0]), math.inf if bounds[1] is None else float(bounds[1]))
    if field["kind"] == "explicit":
        expr = Expression(field["E"], n)
        if expr.uses_E:
            raise ConfigError("the modulus expression cannot refer to E")

        def E(x, y):
            return np.asarray(expr(x, y), dtype=float)
    else:
        mean = Expression(field.get("mean", 1.0), n)
        kcfg = field["kernel"]
        kernel = kl.CovarianceKernel(kcfg["kind"], float(kcfg.get("variance", 1.0)), float(kcfg.get("length", 1.0)))
        axes = tuple(field.get("axes", [0, 1]))
        box = [domain[a] for a in axes]
        n_terms = int(field.get("n_terms", n))
        if n_terms > n:
            raise ConfigError(f"field: {n_terms} KL terms need as many variables, got {n}")
        modes = kl.solve_eigenpairs(kernel, box, max(n_terms, 1), int(field.get("n_quad", 40)), axes=axes)
        expansion = kl.KLExpansion(lambda x: mean(x), modes, n_terms)

        def E(x, y):
            return expansion(x, y)

    loads = cfg.get("loads") or {}
    f = kl._zero_load
    if "f" in loads:
        fv = compile_vector(loads["f"], n)

        def f(x, y, Ev):
            return fv(x, y, Ev)

    g = {side: compile_vector(comps, n) for side, comps in (loads.get("g") or {}).items()}
    return kl.RandomFieldModel(dists, E, f, g, e_bounds, domain, cfg.get("title", "config"))


def build_exact(cfg: dict, law: MaterialLaw, n: int) -> analysis.ExactSolution:
    ex = cfg["exact"]
    if ex.get("kind") == "bending":
        return analysis.bending_exact(law)
    u = compile_vector(ex["u"], n)

    def grad(x, y):
        return complex_step_gradient(u, x, y)

    if "sigma" in ex:
        sv = compile_vector(ex["sigma"], n)

        def sigma(x, y, E):
            return sv(x, y, E)
    else:
        def sigma(x, y, E):
            G = grad(x, y)
            strain = np.column_stack([G[:, 0, 0], G[:, 1, 1], G[:, 0, 1] + G[:, 1, 0]])
            return np.asarray(E)[:, None] * (strain @ law.C.T)

    return analysis.ExactSolution(lambda x, y: u(x, y), grad, sigma, "config")


def build_basis(bcfg: dict, dists, degree: int) -> StochasticBasis:
    kind = bcfg["kind"]
    if kind == "deterministic" or not dists:
        return deterministic_basis()
    if kind == "p_version":
        return build_p_version(dists, degree)
    if kind == "k_version":
        return build_k_version(dists, bcfg.get("partitions", 1), degree)
    return build_gpc(dists, degree, bcfg.get("total_degree", True))


def build_meshes(mcfg: dict, domain, family: str) -> list[QuadMesh]:
    sides = tuple(mcfg.get("dirichlet_sides", ["left"]))
    levels = mcfg["levels"]
    if "file" in mcfg:
        base = load_mesh(mcfg["file"])
        base = from_arrays(base.nodes, base.elements, sides, label="file")
        out, mesh, cur = [], base, 0
        for lv in sorted(levels):
            while cur < lv:
                mesh, cur = refine(mesh), cur + 1
            out.append(mesh)
        return out
    nx, ny = mcfg["base"]
    out = []
    for lv in levels:
        if family == "rectangular":
            m = generate_rectangular(nx * 2**lv, ny * 2**lv, domain)
        else:
            if (nx, ny) != (5, 1):
                raise ConfigError("the irregular family has a fixed 5x1 base")
            m = generate_irregular(lv, domain)
        if sides != ("left",):
            m = from_arrays(m.nodes, m.elements, sides, label=m.label)
        out.append(m)
    return out


@dataclass(frozen=True)
class CaseSpec:
    """A study row family before meshes and models are built."""

    row: dict  # fully merged row configuration
    family: str
    nu: float
    degree: int


def expand_cases(cfg: dict) -> list[CaseSpec]:
    """Cross product of study rows with mesh families, Poisson ratios and degrees."""
    cfg = with_defaults(cfg)
    rows = cfg.get("study")
    if rows is None:
        rows = [{}]
    shared = {k: cfg[k] for k in ("scheme", "solver", "recovery", "basis", "material", "mesh", "quadrature")}
    out = []
    for r in rows:
        row = merged(shared, r)
        for family in row["mesh"]["families"]:
            for nu in row["material"]["nu"]:
                degrees = row["basis"]["degrees"] if row["basis"]["kind"] != "deterministic" else [0]
                for deg in degrees:
                    out.append(CaseSpec(row, family, float(nu), int(deg)))
    return out


def case_label(spec: CaseSpec) -> str:
    row = spec.row
    if "label" in row:
        base = row["label"]
    else:
        base = f"{row['scheme']}/{row['solver']}"
    bk = row["basis"]["kind"]
    return f"{base} {bk} p={spec.degree} nu={spec.nu:g} {spec.family}"


def build_case(cfg: dict, spec: CaseSpec) -> analysis.StudyCase:
    cfg = with_defaults(cfg)
    row = spec.row
    law = MaterialLaw(row["material"]["mode"], spec.nu)
    model = build_model(cfg)
    exact = build_exact(cfg, law, model.N)
    basis = build_basis(row["basis"], model.dists, spec.degree)
    domain = tuple(tuple(float(v) for v in iv) for iv in cfg["domain"])
    meshes = tuple(build_meshes(row["mesh"], domain, spec.family))
    q = row["quadrature"]
    return analysis.StudyCase(
        label=case_label(spec),
        problem=analysis.Problem(model, law, exact),
        basis=basis,
        meshes=meshes,
        levels=tuple(row["mesh"]["levels"]),
        family=spec.family,
        scheme=row["scheme"],
        solver=row["solver"],
        recovery=row["recovery"],
        degree=spec.degree,
        assembly_points=q.get("assembly_stochastic"),
        n_gauss=q.get("spatial"),
        quad_space=q["error_spatial"],
        quad_stoch=q["error_stochastic"],
    )
