"""Named experiment configurations for the two cantilever benchmarks and the diagnostics."""

from __future__ import annotations

import copy

_NUS = [0.25, 0.49, 0.499, 0.4999]

_EXAMPLE1 = {
    "task": "convergence",
    "domain": [[0.0, 10.0], [-1.0, 1.0]],
    "material": {"mode": "plane_stress", "nu": [0.25]},
    "field": {"kind": "explicit", "variables": [{"dist": "uniform", "a": 500, "b": 1500}], "E": "y1",
              "e_bounds": [500, 1500]},
    "loads": {"g": {"right": ["-2*E*x2", "0"]}},
    "exact": {"kind": "bending"},
    "mesh": {"families": ["rectangular", "irregular"], "levels": [0, 1, 2, 3], "base": [5, 1]},
}

_EXAMPLE2 = {
    "task": "convergence",
    "domain": [[0.0, 10.0], [-1.0, 1.0]],
    "material": {"mode": "plane_strain", "nu": _NUS},
    "field": {"kind": "explicit", "variables": [{"dist": "normal"}], "E": "1 + y1**2", "e_bounds": [1, None]},
    "loads": {"g": {"right": ["-2*E*x2", "0"]}},
    "exact": {"kind": "bending"},
    "mesh": {"families": ["rectangular", "irregular"], "levels": [1, 2, 3, 4], "base": [5, 1]},
    "quadrature": {"assembly_stochastic": 40},
}


def _with(base: dict, **kw) -> dict:
    out = copy.deepcopy(base)
    out.update(copy.deepcopy(kw))
    return out


PRESETS: dict[str, tuple[str, dict]] = {
    "example1_pxh": (
        "plane stress, E uniform on [500,1500]: p-version Galerkin, p = 0, 1, 2",
        _with(_EXAMPLE1, title="example1_pxh", basis={"kind": "p_version", "degrees": [0, 1, 2]}),
    ),
    "example1_pcxh": (
        "plane stress, E = 500 + 1000 Phi(xi): Hermite chaos Galerkin, p = 4, 6, 8",
        _with(
            _EXAMPLE1,
            title="example1_pcxh",
            field={"kind": "explicit", "variables": [{"dist": "normal"}], "E": "500 + 1000*Phi(y1)",
                   "e_bounds": [500, 1500]},
            basis={"kind": "gpc", "degrees": [4, 6, 8]},
            quadrature={"assembly_stochastic": 40, "error_stochastic": 40},
        ),
    ),
    "example2_pxh": (
        "plane strain, E = 1 + xi^2: p-version Galerkin, p = 0, 2, four Poisson ratios",
        _with(_EXAMPLE2, title="example2_pxh", basis={"kind": "p_version", "degrees": [0, 2]}),
    ),
    "example2_locking": (
        "plane strain, E = 1 + xi^2: bilinear displacement element against the hybrid element",
        _with(
            _EXAMPLE2,
            title="example2_locking",
            basis={"kind": "p_version", "degrees": [0]},
            study=[
                {"label": "bilinear", "scheme": "bilinear", "solver": "galerkin"},
                {"label": "hybrid", "scheme": "ps_hybrid", "solver": "per_sample"},
            ],
        ),
    ),
    "example2_persample": (
        "plane strain, E = 1 + xi^2: deterministic hybrid solves at each Gauss-Hermite node",
        _with(_EXAMPLE2, title="example2_persample", solver="per_sample",
              basis={"kind": "p_version", "degrees": [0]}),
    ),
    "stability_sweep": (
        "discrete coercivity and inf-sup constants over lambda = 1 ... 1e6, plus a patch test",
        {"task": "stability", "title": "stability_sweep", "domain": [[0.0, 1.0], [0.0, 1.0]],
         "stability": {"lambdas": [1, 1e2, 1e4, 1e6], "mesh": [4, 4], "degree": 2, "mode": "plane_strain",
                       "patch": True}},
    ),
    "kl_diagnostics": (
        "exponential covariance on [0,1]: Nystrom eigenvalues, trace and truncation checks",
        {"task": "kl", "title": "kl_diagnostics",
         "kl": {"kernel": {"kind": "exponential", "variance": 1.0, "length": 1.0}, "interval": [0.0, 1.0],
                "n_modes": 10, "n_quad": 200}},
    ),
}


def list_presets() -> list[tuple[str, str]]:
    return [(name, desc) for name, (desc, _) in PRESETS.items()]


def get_preset(name: str) -> dict:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return copy.deepcopy(PRESETS[name][1])
