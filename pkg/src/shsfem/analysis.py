"""Error norms, benchmark problems, stability checks and convergence studies."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from . import fem_core
from .fem_core import DiscreteSolution, element_dofs, element_geometry
from .kl import RandomFieldModel
from .material import MaterialLaw
from .mesh import QuadMesh, from_arrays
from .stochastic_basis import (
    StandardNormal,
    StochasticBasis,
    StochasticQuadrature,
    Uniform,
    build_p_version,
    deterministic_basis,
    normal_to_uniform,
)

# Voigt weights giving the Frobenius norm of a symmetric tensor
FROBENIUS = np.array([1.0, 1.0, 2.0])


@dataclass(frozen=True)
class ExactSolution:
    """Reference displacement, its gradient and stress.

    ``u(x, y) -> (n, 2)``, ``grad(x, y) -> (n, 2, 2)`` with ``grad[:, i, j] = du_i/dx_j``,
    ``sigma(x, y, E) -> (n, 3)`` in Voigt order.
    """

    u: Callable
    grad: Callable
    sigma: Callable
    name: str = ""

    def dirichlet(self, x, y) -> np.ndarray:
        return self.u(x, y)


@dataclass(frozen=True, eq=False)
class Problem:
    model: RandomFieldModel
    law: MaterialLaw
    exact: ExactSolution

    @property
    def name(self) -> str:
        return self.model.name


def _bending_stress(x, y, E):
    E = np.broadcast_to(np.asarray(E, dtype=float), (len(x),))
    return np.column_stack([-2.0 * E * x[:, 1], np.zeros(len(x)), np.zeros(len(x))])


def _bending_traction(x, y, E):
    return np.column_stack([-2.0 * E * x[:, 1], np.zeros(len(x))])


def bending_exact(law: MaterialLaw) -> ExactSolution:
    """Beam-bending field with stress (-2 E x2, 0, 0) for either plane mode."""
    nu = law.nu
    if law.mode == "plane_stress":
        c1, c2 = 1.0, nu
    else:
        c1, c2 = 1.0 - nu**2, nu * (1.0 + nu)

    def u(x, y):
        x = np.atleast_2d(x)
        return np.column_stack([-2.0 * c1 * x[:, 0] * x[:, 1], c1 * x[:, 0] ** 2 + c2 * (x[:, 1] ** 2 - 1.0)])

    def grad(x, y):
        x = np.atleast_2d(x)
        g = np.empty((len(x), 2, 2))
        g[:, 0, 0] = -2.0 * c1 * x[:, 1]
        g[:, 0, 1] = -2.0 * c1 * x[:, 0]
        g[:, 1, 0] = 2.0 * c1 * x[:, 0]
        g[:, 1, 1] = 2.0 * c2 * x[:, 1]
        return g

    return ExactSolution(u, grad, _bending_stress, f"bending[{law.mode}]")


def _uniform_modulus(x, y):
    return np.full(len(np.atleast_2d(x)), float(y[0]))


def example1(nu: float = 0.25, bounds: tuple[float, float] = (500.0, 1500.0)) -> Problem:
    """Plane-stress cantilever with a uniformly distributed random modulus E = y."""
    law = MaterialLaw("plane_stress", nu)
    model = RandomFieldModel((Uniform(*bounds),), _uniform_modulus, g={"right": _bending_traction},
                             e_bounds=bounds, name="example1")
    return Problem(model, law, bending_exact(law))


def example1_gpc(nu: float = 0.25, bounds: tuple[float, float] = (500.0, 1500.0)) -> Problem:
    """Example 1 re-parametrized by a standard normal germ: E = a + (b - a) Phi(xi)."""
    law = MaterialLaw("plane_stress", nu)
    to_uniform = normal_to_uniform(*bounds)

    def E(x, y):
        return np.full(len(np.atleast_2d(x)), float(to_uniform(y[0])))

    model = RandomFieldModel((StandardNormal(),), E, g={"right": _bending_traction}, e_bounds=bounds,
                             name="example1_gpc")
    return Problem(model, law, bending_exact(law))


def example2(nu: float = 0.25) -> Problem:
    """Plane-strain cantilever with E = 1 + xi^2, xi standard normal."""
    law = MaterialLaw("plane_strain", nu)

    def E(x, y):
        return np.full(len(np.atleast_2d(x)), 1.0 + float(y[0]) ** 2)

    model = RandomFieldModel((StandardNormal(),), E, g={"right": _bending_traction}, e_bounds=(1.0, math.inf),
                             name="example2")
    return Problem(model, law, bending_exact(law))


def verify_exact(problem: Problem, x, y, step: float = 1e-4) -> tuple[float, float]:
    """Relative residuals of the constitutive law and of -div(sigma) = f at points x."""
    model, law, ex = problem.model, problem.law, problem.exact
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    E = model.modulus(x, y)
    G = ex.grad(x, y)
    strain = np.column_stack([G[:, 0, 0], G[:, 1, 1], G[:, 0, 1] + G[:, 1, 0]])
    s = ex.sigma(x, y, E)
    scale = max(np.abs(s).max(), 1e-300)
    r_const = np.abs(E[:, None] * (strain @ law.C.T) - s).max() / scale
    div = np.zeros((len(x), 2))
    for j in range(2):
        dx = np.zeros(2)
        dx[j] = step
        xp, xm = x + dx, x - dx
        ds = (ex.sigma(xp, y, model.modulus(xp, y)) - ex.sigma(xm, y, model.modulus(xm, y))) / (2 * step)
        # row i of the stress tensor: (s11, s12) and (s12, s22)
        div[:, 0] += ds[:, 0] if j == 0 else ds[:, 2]
        div[:, 1] += ds[:, 2] if j == 0 else ds[:, 1]
    r_eq = np.abs(-div - model.f(x, y, E)).max() / scale
    return float(r_const), float(r_eq)


# ---------------------------------------------------------------------------
# error norms


def _error_sums(grad_h, stress_h, exact: ExactSolution, model: RandomFieldModel, geom, y) -> np.ndarray:
    """Weighted squared norms (|e_u|_1^2, |u|_1^2, ||e_s||^2, ||s||^2) at one parameter value."""
    ne, ng = geom.detJ.shape
    xs = geom.x.reshape(-1, 2)
    wd = geom.wdet.reshape(-1)
    G = exact.grad(xs, y)
    Gh = grad_h.reshape(-1, 2, 2)
    S = exact.sigma(xs, y, model.modulus(xs, y))
    Sh = stress_h.reshape(-1, 3)
    return np.array([
        np.sum(wd[:, None, None] * (Gh - G) ** 2),
        np.sum(wd[:, None, None] * G**2),
        np.sum(wd[:, None] * FROBENIUS * (Sh - S) ** 2),
        np.sum(wd[:, None] * FROBENIUS * S**2),
    ])


def _relative(sums: np.ndarray) -> tuple[float, float]:
    out = []
    for num, den in ((sums[0], sums[1]), (sums[2], sums[3])):
        out.append(math.sqrt(max(num, 0.0) / den) if den > 0 else math.sqrt(max(num, 0.0)))
    return out[0], out[1]


def error_norms(solution: DiscreteSolution, exact: ExactSolution, quad_space: int = 4, quad_stoch: int = 20,
                recovery: str | None = None) -> tuple[float, float]:
    """Relative stochastic H1-seminorm displacement error and L2 stress error.

    Falls back to absolute errors when the exact norm vanishes.
    """
    sys_ = solution.system
    geom = element_geometry(sys_.mesh, quad_space)
    quad = sys_.basis.quadrature(quad_stoch)
    stress = fem_core.recover_stress(solution, recovery or solution.recovery)
    sums = np.zeros(4)
    for yq, w in zip(quad.nodes, quad.weights):
        sums += w * _error_sums(solution.gradients(geom, yq), stress.values(geom, yq), exact, sys_.model, geom, yq)
    return _relative(sums)


def exact_norms(exact: ExactSolution, model: RandomFieldModel, mesh: QuadMesh, quad: StochasticQuadrature,
                quad_space: int = 4) -> tuple[float, float]:
    """Stochastic H1 seminorm of the displacement and L2 norm of the stress of a reference field."""
    geom = element_geometry(mesh, quad_space)
    ne, ng = geom.detJ.shape
    sums = np.zeros(4)
    for yq, w in zip(quad.nodes, quad.weights):
        sums += w * _error_sums(np.zeros((ne, ng, 2, 2)), np.zeros((ne, ng, 3)), exact, model, geom, yq)
    return math.sqrt(sums[1]), math.sqrt(sums[3])


def per_sample_errors(mesh: QuadMesh, law: MaterialLaw, model: RandomFieldModel, exact: ExactSolution,
                      quad: StochasticQuadrature, scheme: str = "ps_hybrid", quad_space: int = 4,
                      n_gauss: int | None = None) -> tuple[float, float, int]:
    """Deterministic solve at every stochastic node, errors integrated with the node weights."""
    geom = element_geometry(mesh, quad_space)
    basis = deterministic_basis()
    sums = np.zeros(4)
    ndof = 0
    for i, (yq, w) in enumerate(zip(quad.nodes, quad.weights)):
        try:
            frozen = model.at(yq)
            system = fem_core.assemble(mesh, law, frozen, basis, scheme,
                                       dirichlet=lambda x, _y, yq=yq: exact.dirichlet(x, yq), n_gauss=n_gauss)
            sol = fem_core.solve(system)
        except Exception as err:
            raise RuntimeError(f"per-sample solve failed at node {i} (y={yq.tolist()}): {err}") from err
        ndof = system.n_dofs
        stress = fem_core.recover_stress(sol).values(geom, np.zeros(0))
        sums += w * _error_sums(sol.gradients(geom, np.zeros(0)), stress, exact, model, geom, yq)
    e_u, e_s = _relative(sums)
    return e_u, e_s, ndof


# ---------------------------------------------------------------------------
# reports


@dataclass
class ErrorRow:
    case: str
    mesh: str
    level: int
    e_u: float
    e_sigma: float
    dofs: int
    family: str = ""
    nu: float | None = None
    scheme: str = "ps_hybrid"
    basis: str = ""
    degree: int | None = None
    solver: str = "galerkin"
    recovery: str = "galerkin"
    wall_time: float = 0.0


CSV_FIELDS = ("case", "family", "mesh", "level", "nu", "scheme", "basis", "degree", "solver", "recovery",
              "dofs", "e_u", "e_sigma", "ratio_u", "ratio_sigma")


@dataclass
class ErrorReport:
    rows: list[ErrorRow] = field(default_factory=list)

    def add(self, row: ErrorRow) -> None:
        self.rows.append(row)

    def ratios(self) -> list[tuple[float | None, float | None]]:
        """Successive error ratios e(level-1)/e(level) within each case (None when not nested)."""
        out: list[tuple[float | None, float | None]] = []
        last: dict[str, ErrorRow] = {}
        for r in self.rows:
            prev = last.get(r.case)
            if prev is not None and prev.family == r.family and r.level == prev.level + 1:
                ru = prev.e_u / r.e_u if r.e_u > 0 else None
                rs = prev.e_sigma / r.e_sigma if r.e_sigma > 0 else None
                out.append((ru, rs))
            else:
                out.append((None, None))
            last[r.case] = r
        return out

    def p_slopes(self) -> list[dict]:
        """Slopes of log e_sigma and log e_u against degree at fixed mesh (exponential-rate check)."""
        groups: dict[tuple, list[ErrorRow]] = {}
        for r in self.rows:
            if r.degree is None:
                continue
            key = (r.family, r.mesh, r.nu, r.scheme, r.basis.split("(")[0], r.solver)
            groups.setdefault(key, []).append(r)
        out = []
        for key, rows in groups.items():
            rows = sorted(rows, key=lambda r: r.degree)
            for a, b in zip(rows, rows[1:]):
                if b.degree == a.degree:
                    continue
                entry = {"family": key[0], "mesh": key[1], "nu": key[2], "basis": key[4], "p0": a.degree,
                         "p1": b.degree}
                for name in ("e_u", "e_sigma"):
                    ea, eb = getattr(a, name), getattr(b, name)
                    entry[f"slope_{name}"] = (math.log(eb) - math.log(ea)) / (b.degree - a.degree) \
                        if ea > 0 and eb > 0 else None
                out.append(entry)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r, (ru, rs) in zip(self.rows, self.ratios()):
            w.writerow([r.case, r.family, r.mesh, r.level, _fmt(r.nu), r.scheme, r.basis,
                        "" if r.degree is None else r.degree, r.solver, r.recovery, r.dofs,
                        _fmt(r.e_u), _fmt(r.e_sigma), _fmt(ru), _fmt(rs)])
        return buf.getvalue()

    def to_markdown(self, digits: int = 4) -> str:
        """Case-by-mesh tables of e_u and e_sigma, one column per mesh."""
        if not self.rows:
            return "_no results_\n"
        meshes: list[str] = []
        for r in sorted(self.rows, key=lambda r: (r.family, r.level)):
            if r.mesh not in meshes:
                meshes.append(r.mesh)
        cases = list(dict.fromkeys(r.case for r in self.rows))
        parts = []
        for name, title in (("e_u", "e_u"), ("e_sigma", "e_sigma")):
            cells = {(r.case, r.mesh): getattr(r, name) for r in self.rows}
            lines = [f"### {title}", "", "| case | " + " | ".join(meshes) + " |",
                     "|---|" + "---:|" * len(meshes)]
            for c in cases:
                vals = [f"{cells[(c, m)]:.{digits}f}" if (c, m) in cells else "" for m in meshes]
                lines.append(f"| {c} | " + " | ".join(vals) + " |")
            parts.append("\n".join(lines))
        slopes = self.p_slopes()
        if slopes:
            lines = ["### degree slopes (log error per unit degree)", "",
                     "| family | mesh | basis | p | slope e_u | slope e_sigma |", "|---|---|---|---|---:|---:|"]
            for s in slopes:
                lines.append(f"| {s['family']} | {s['mesh']} | {s['basis']} | {s['p0']}->{s['p1']} | "
                             f"{_fmt(s['slope_e_u'], 3)} | {_fmt(s['slope_e_sigma'], 3)} |")
            parts.append("\n".join(lines))
        return "\n\n".join(parts) + "\n"

    def to_records(self) -> list[dict]:
        return [asdict(r) for r in self.rows]


def _fmt(v, digits: int | None = None) -> str:
    if v is None:
        return ""
    if digits is not None:
        return f"{v:.{digits}f}"
    return repr(float(v))


# ---------------------------------------------------------------------------
# studies


@dataclass(frozen=True, eq=False)
class StudyCase:
    """One row family of a convergence table: a fixed problem and basis over a mesh sequence."""

    label: str
    problem: Problem
    basis: StochasticBasis
    meshes: tuple[QuadMesh, ...]
    levels: tuple[int, ...] | None = None
    family: str = "rectangular"
    scheme: str = "ps_hybrid"
    solver: str = "galerkin"  # or "per_sample"
    recovery: str = "galerkin"
    degree: int | None = None
    assembly_points: int | Sequence[int] | None = None
    n_gauss: int | None = None
    quad_space: int = 4
    quad_stoch: int = 20


def run_case(case: StudyCase, mesh: QuadMesh, level: int) -> ErrorRow:
    p = case.problem
    t0 = time.perf_counter()
    if case.solver == "per_sample":
        quad = case.basis.quadrature(case.quad_stoch)
        e_u, e_s, ndof = per_sample_errors(mesh, p.law, p.model, p.exact, quad, case.scheme, case.quad_space,
                                           case.n_gauss)
    elif case.solver == "galerkin":
        quad = case.basis.quadrature(case.assembly_points)
        system = fem_core.assemble(mesh, p.law, p.model, case.basis, case.scheme, dirichlet=p.exact.dirichlet,
                                   quad=quad, n_gauss=case.n_gauss)
        sol = fem_core.solve(system, case.recovery)
        e_u, e_s = error_norms(sol, p.exact, case.quad_space, case.quad_stoch)
        ndof = system.n_dofs
    else:
        raise ValueError(f"unknown solver {case.solver!r}")
    return ErrorRow(case.label, mesh.label, level, e_u, e_s, ndof, case.family, p.law.nu, case.scheme,
                    case.basis.kind, case.degree, case.solver, case.recovery, time.perf_counter() - t0)


def convergence_study(cases: Sequence[StudyCase], report: ErrorReport | None = None) -> ErrorReport:
    """Run every case over its mesh sequence; rows appended to ``report`` as they finish."""
    report = ErrorReport() if report is None else report
    for case in cases:
        levels = case.levels if case.levels is not None else range(len(case.meshes))
        for level, mesh in zip(levels, case.meshes):
            report.add(run_case(case, mesh, level))
    return report


def per_sample_solve(mesh: QuadMesh, problem: Problem, quad: StochasticQuadrature, scheme: str = "ps_hybrid",
                     quad_space: int = 4) -> ErrorReport:
    t0 = time.perf_counter()
    e_u, e_s, ndof = per_sample_errors(mesh, problem.law, problem.model, problem.exact, quad, scheme, quad_space)
    row = ErrorRow(problem.name, mesh.label, 0, e_u, e_s, ndof, nu=problem.law.nu, scheme=scheme,
                   solver="per_sample", wall_time=time.perf_counter() - t0)
    return ErrorReport([row])


# ---------------------------------------------------------------------------
# stability


@dataclass(frozen=True)
class StabilityResult:
    lam: float
    nu: float
    alpha: float
    beta: float
    kernel_dim: int


def _stress_mass(geom) -> np.ndarray:
    P = geom.ps_modes()
    return np.einsum("eg,egia,i,egib->eab", geom.wdet, P, FROBENIUS, P)


def _gradient_gram(geom) -> np.ndarray:
    # |v|_1^2 = sum_ij (dv_i/dx_j)^2
    gg = np.einsum("eg,egaj,egbj->eab", geom.wdet, geom.grad, geom.grad)
    out = np.zeros((len(gg), 8, 8))
    out[:, 0::2, 0::2] = gg
    out[:, 1::2, 1::2] = gg
    return out


def _block_diag_dense(blocks: np.ndarray) -> np.ndarray:
    ne, n, _ = blocks.shape
    out = np.zeros((ne * n, ne * n))
    for e in range(ne):
        out[e * n:(e + 1) * n, e * n:(e + 1) * n] = blocks[e]
    return out


def infsup_test(mesh: QuadMesh, law: MaterialLaw, model: RandomFieldModel, basis: StochasticBasis,
                quad: StochasticQuadrature | None = None, n_gauss: int | None = None,
                lam: float | None = None) -> StabilityResult:
    """Discrete coercivity-on-kernel and inf-sup constants in the natural norms."""
    quad = basis.quadrature() if quad is None else quad
    n_gauss = n_gauss or fem_core.default_gauss(mesh, "ps_hybrid")
    geom = element_geometry(mesh, n_gauss)
    H, G = fem_core.ps_element_blocks(mesh, law, model, basis, quad, n_gauss)
    gram = basis.gram(quad)
    M = basis.M
    ne = mesh.n_elements
    ns = 5 * M * ne
    if ns > 4000:
        raise ValueError(f"{ns} stress dofs is too many for the dense eigenvalue test")
    S_el = np.einsum("mn,eab->emanb", gram, _stress_mass(geom)).reshape(ne, 5 * M, 5 * M)
    K_el = np.einsum("mn,eab->emanb", gram, _gradient_gram(geom)).reshape(ne, 8 * M, 8 * M)
    ndof = M * 2 * mesh.n_nodes
    edofs = element_dofs(mesh, M)
    B = np.zeros((ns, ndof))
    Ku = np.zeros((ndof, ndof))
    for e in range(ne):
        B[e * 5 * M:(e + 1) * 5 * M, edofs[e]] += G[e]
        Ku[np.ix_(edofs[e], edofs[e])] += K_el[e]
    nsd = 2 * mesh.n_nodes
    dn = mesh.dirichlet_nodes()
    fixed = (np.arange(M)[:, None, None] * nsd + 2 * dn[None, :, None] + np.arange(2)).ravel()
    free = np.setdiff1d(np.arange(ndof), fixed)
    B, Ku = B[:, free], Ku[np.ix_(free, free)]
    A = _block_diag_dense(H)
    S = _block_diag_dense(S_el)

    U, sv, _ = linalg.svd(B, full_matrices=True)
    rank = int(np.sum(sv > 1e-10 * sv[0]))
    if rank < B.shape[1]:
        raise RuntimeError(f"displacement space not controlled by stresses: rank {rank} < {B.shape[1]}")
    Z = U[:, rank:]
    if Z.shape[1] == 0:
        alpha = math.inf
    else:
        alpha = float(linalg.eigh(Z.T @ A @ Z, Z.T @ S @ Z, eigvals_only=True)[0])
    SinvB = np.linalg.solve(S, B)
    beta2 = linalg.eigh(B.T @ SinvB, Ku, eigvals_only=True)[0]
    return StabilityResult(law.lam_hat if lam is None else lam, law.nu, alpha, float(math.sqrt(max(beta2, 0.0))),
                           Z.shape[1])


def lame_sweep_problem(lam: float, mode: str = "plane_strain", spread: float = 0.5) -> tuple[MaterialLaw, RandomFieldModel]:
    """Material with shear modulus 1 (in mean) and first Lame parameter ``lam``.

    The modulus is E(y) = 2 (1 + nu) y with y uniform on [1 - spread, 1 + spread].
    """
    if mode == "plane_strain":
        nu = lam / (2.0 * (lam + 1.0))
    else:
        # plane-stress lambda = 2 mu nu / (1 - nu) stays below 2 mu
        if not 0.0 < lam < 2.0:
            raise ValueError(f"plane stress with mu = 1 only reaches 0 < lambda < 2, got {lam}")
        nu = lam / (lam + 2.0)
    law = MaterialLaw(mode, nu)
    scale = 2.0 * (1.0 + nu)

    def E(x, y):
        return np.full(len(np.atleast_2d(x)), scale * float(y[0]) if len(y) else scale)

    model = RandomFieldModel((Uniform(1.0 - spread, 1.0 + spread),), E, domain=((0.0, 1.0), (0.0, 1.0)),
                             name=f"lame[{lam:g}]")
    return law, model


def stability_sweep(mesh: QuadMesh, lams: Sequence[float] = (1.0, 1e2, 1e4, 1e6), degree: int = 2,
                    mode: str = "plane_strain") -> list[StabilityResult]:
    out = []
    for lam in lams:
        law, model = lame_sweep_problem(lam, mode)
        basis = build_p_version(model.dists, degree)
        out.append(infsup_test(mesh, law, model, basis, lam=lam))
    return out


# ---------------------------------------------------------------------------
# patch test


def distorted_patch(domain=((0.0, 2.0), (0.0, 2.0)), shift=(0.23, -0.17), dirichlet_sides=("left",)) -> QuadMesh:
    """2x2 mesh of the rectangle with the centre node displaced (convex elements)."""
    (x0, x1), (y0, y1) = domain
    xs, ys = np.linspace(x0, x1, 3), np.linspace(y0, y1, 3)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    nodes[4] += np.asarray(shift) * [(x1 - x0) / 2, (y1 - y0) / 2]
    # node id i * 3 + j for column i, row j
    elements = [[i * 3 + j, (i + 1) * 3 + j, (i + 1) * 3 + j + 1, i * 3 + j + 1] for i in range(2) for j in range(2)]
    return from_arrays(nodes, elements, dirichlet_sides, label="patch2x2")


_NORMALS = {"left": (-1.0, 0.0), "right": (1.0, 0.0), "bottom": (0.0, -1.0), "top": (0.0, 1.0)}


def patch_test(mesh: QuadMesh, law: MaterialLaw, sigma, modulus: float = 1.0, n_gauss: int | None = None) -> float:
    """Max relative stress error for a constant-stress state reproduced by tractions and Dirichlet data."""
    sigma = np.asarray(sigma, dtype=float)
    eps = law.C_inv @ sigma / modulus
    tensor = np.array([[eps[0], 0.5 * eps[2]], [0.5 * eps[2], eps[1]]])
    s_mat = np.array([[sigma[0], sigma[2]], [sigma[2], sigma[1]]])

    def traction_for(side):
        t = s_mat @ np.array(_NORMALS[side])
        return lambda x, y, E: np.tile(t, (len(x), 1))

    g = {side: traction_for(side) for side in _NORMALS}
    model = RandomFieldModel((), lambda x, y: np.full(len(np.atleast_2d(x)), modulus), g=g, name="patch")
    system = fem_core.assemble(mesh, law, model, deterministic_basis(), "ps_hybrid",
                               dirichlet=lambda x, y: x @ tensor.T, n_gauss=n_gauss)
    sol = fem_core.solve(system)
    vals = fem_core.recover_stress(sol).values(element_geometry(mesh, 3), np.zeros(0))
    return float(np.abs(vals - sigma).max() / np.abs(sigma).max())

