"""Stochastic Galerkin assembly for the Pian-Sumihara hybrid stress quadrilateral.

Unknowns are indexed stochastic-mode major: global displacement dof
``m * 2 * n_nodes + 2 * node + component``. Element-local dofs follow the same
pattern, ``m * 8 + 2 * vertex + component`` for displacements and
``m * 5 + i`` for the five stress parameters.

The stress parameters are element-discontinuous, so they are eliminated
element by element (K_T = G^T H^{-1} G) and the global system is symmetric
positive definite once Dirichlet dofs are removed. Element loops are
vectorized over elements; each stochastic quadrature node contributes one
batched pass.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .kl import RandomFieldModel
from .material import MaterialLaw
from .mesh import REFERENCE_VERTICES, MeshError, QuadMesh, element_maps
from .stochastic_basis import StochasticBasis, StochasticQuadrature

log = logging.getLogger(__name__)

SCHEMES = ("ps_hybrid", "bilinear")
RECOVERY_MODES = ("galerkin", "per_sample")


class SingularSystemError(RuntimeError):
    pass


def gauss_square(n: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.legendre.leggauss(n)
    s, r = np.meshgrid(t, t, indexing="ij")
    return np.column_stack([s.ravel(), r.ravel()]), np.outer(w, w).ravel()


def shape_functions(xhat) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear shape functions and reference gradients at points (n, 2)."""
    xhat = np.atleast_2d(xhat)
    s, t = xhat[:, :1], xhat[:, 1:]
    sv, tv = REFERENCE_VERTICES[:, 0][None, :], REFERENCE_VERTICES[:, 1][None, :]
    N = 0.25 * (1 + s * sv) * (1 + t * tv)
    dN = np.stack([0.25 * sv * (1 + t * tv), 0.25 * (1 + s * sv) * tv], axis=-1)
    return N, dN


def ps_modes(a: np.ndarray, b: np.ndarray, xhat) -> np.ndarray:
    """Five-parameter stress modes, shape (n_elements, n_points, 3, 5)."""
    a1, a3, b1, b3 = a[:, 1], a[:, 3], b[:, 1], b[:, 3]
    scale = np.maximum(np.abs(a).max(axis=1), np.abs(b).max(axis=1))
    bad = np.nonzero((np.abs(a1) <= 1e-12 * scale) | (np.abs(b3) <= 1e-12 * scale))[0]
    if bad.size:
        raise MeshError(
            f"stress mode undefined for element {int(bad[0])}: a1 = 0 or b3 = 0 (rotated element)",
            element=int(bad[0]),
        )
    xhat = np.atleast_2d(xhat)
    s, t = xhat[:, 0][None, :], xhat[:, 1][None, :]
    ne, npt = len(a), len(xhat)
    P = np.zeros((ne, npt, 3, 5))
    P[:, :, 0, 0] = P[:, :, 1, 1] = P[:, :, 2, 2] = 1.0
    P[:, :, 0, 3] = t
    P[:, :, 1, 3] = (b1**2 / a1**2)[:, None] * t
    P[:, :, 2, 3] = (b1 / a1)[:, None] * t
    P[:, :, 0, 4] = (a3**2 / b3**2)[:, None] * s
    P[:, :, 1, 4] = s
    P[:, :, 2, 4] = (a3 / b3)[:, None] * s
    return P


@dataclass(frozen=True, eq=False)
class ElementGeometry:
    """Per-element quantities at a tensor Gauss rule on the reference square."""

    mesh: QuadMesh
    points: np.ndarray  # (ng, 2)
    weights: np.ndarray  # (ng,)
    N: np.ndarray  # (ng, 4)
    x: np.ndarray  # (ne, ng, 2)
    detJ: np.ndarray  # (ne, ng)
    grad: np.ndarray  # (ne, ng, 4, 2) physical shape-function gradients
    B: np.ndarray  # (ne, ng, 3, 8) strain-displacement, engineering shear

    @property
    def wdet(self) -> np.ndarray:
        return self.weights[None, :] * self.detJ

    def ps_modes(self) -> np.ndarray:
        a, b = element_maps(self.mesh)
        return ps_modes(a, b, self.points)


@lru_cache(maxsize=64)
def element_geometry(mesh: QuadMesh, n_gauss: int) -> ElementGeometry:
    pts, wts = gauss_square(n_gauss)
    return geometry_at(mesh, pts, wts)


def geometry_at(mesh: QuadMesh, pts, wts) -> ElementGeometry:
    N, dN = shape_functions(pts)
    X = mesh.vertices()
    x = np.einsum("ga,eai->egi", N, X)
    J = np.einsum("eai,gaj->egij", X, dN)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(det <= 0):
        e = int(np.nonzero((det <= 0).any(axis=1))[0][0])
        raise MeshError(f"non-positive Jacobian determinant in element {e}", element=e)
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    grad = np.einsum("gaj,egjk->egak", dN, inv)
    ne, ng = det.shape
    B = np.zeros((ne, ng, 3, 8))
    B[..., 0, 0::2] = grad[..., 0]
    B[..., 1, 1::2] = grad[..., 1]
    B[..., 2, 0::2] = grad[..., 1]
    B[..., 2, 1::2] = grad[..., 0]
    return ElementGeometry(mesh, np.asarray(pts), np.asarray(wts), N, x, det, grad, B)


def default_gauss(mesh: QuadMesh, scheme: str) -> int:
    return 3 if scheme == "ps_hybrid" and mesh.is_distorted() else 2


def _modulus_at(model: RandomFieldModel, geom: ElementGeometry, y) -> np.ndarray:
    ne, ng = geom.detJ.shape
    return model.modulus(geom.x.reshape(-1, 2), y).reshape(ne, ng)


def _stochastic_kron(weights_outer: np.ndarray, blocks: np.ndarray) -> np.ndarray:
    """sum over nodes of (psi psi^T)_{mn} * blocks -> (ne, M*a, M*b)."""
    ne, na, nb = blocks.shape
    M = weights_outer.shape[0]
    return np.einsum("mn,eab->emanb", weights_outer, blocks).reshape(ne, M * na, M * nb)


def _psi_outer(basis: StochasticBasis, quad: StochasticQuadrature):
    psi = basis(quad.nodes)
    return psi, np.einsum("q,qm,qn->qmn", quad.weights, psi, psi)


def ps_deterministic_blocks(geom: ElementGeometry, law: MaterialLaw, E: np.ndarray):
    """H = int P^T C^-1 P / E and G = int P^T B over each element at one parameter value."""
    P = geom.ps_modes()
    CP = np.einsum("ij,egjb->egib", law.C_inv, P)
    H = np.einsum("eg,egia,egib->eab", geom.wdet / E, P, CP)
    G = np.einsum("eg,egia,egib->eab", geom.wdet, P, geom.B)
    return H, G


def ps_element_blocks(mesh: QuadMesh, law: MaterialLaw, model: RandomFieldModel, basis: StochasticBasis,
                      quad: StochasticQuadrature | None = None, n_gauss: int | None = None):
    """Stochastic element blocks H (ne, 5M, 5M) and G (ne, 5M, 8M)."""
    quad = basis.quadrature() if quad is None else quad
    geom = element_geometry(mesh, n_gauss or default_gauss(mesh, "ps_hybrid"))
    psi, outer = _psi_outer(basis, quad)
    M = basis.M
    H = np.zeros((mesh.n_elements, 5 * M, 5 * M))
    G0 = None
    for q, yq in enumerate(quad.nodes):
        Hq, G0 = ps_deterministic_blocks(geom, law, _modulus_at(model, geom, yq))
        H += _stochastic_kron(outer[q], Hq)
    G = _stochastic_kron(outer.sum(axis=0), G0)
    return H, G


def condense(H: np.ndarray, G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eliminate stress parameters: K = G^T H^-1 G and recovery R = H^-1 G (batched)."""
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        for e in range(len(H)):
            try:
                np.linalg.cholesky(H[e])
            except np.linalg.LinAlgError:
                raise SingularSystemError(f"stress block of element {e} is not positive definite") from None
        raise
    Z = np.linalg.solve(L, G)
    R = np.linalg.solve(np.swapaxes(L, -1, -2), Z)
    K = np.swapaxes(Z, -1, -2) @ Z
    return K, R


def bilinear_element_stiffness(mesh: QuadMesh, law: MaterialLaw, model: RandomFieldModel, basis: StochasticBasis,
                               quad: StochasticQuadrature | None = None, n_gauss: int = 2) -> np.ndarray:
    """Displacement-element stiffness (ne, 8M, 8M) with E C as the material matrix."""
    quad = basis.quadrature() if quad is None else quad
    geom = element_geometry(mesh, n_gauss)
    psi, outer = _psi_outer(basis, quad)
    CB = np.einsum("ij,egjb->egib", law.C, geom.B)
    K = np.zeros((mesh.n_elements, 8 * basis.M, 8 * basis.M))
    for q, yq in enumerate(quad.nodes):
        Kq = np.einsum("eg,egia,egib->eab", geom.wdet * _modulus_at(model, geom, yq), geom.B, CB)
        K += _stochastic_kron(outer[q], Kq)
    return K


def element_dofs(mesh: QuadMesh, M: int) -> np.ndarray:
    """Global dof numbers of each element, shape (ne, 8M)."""
    nsd = 2 * mesh.n_nodes
    local = (2 * mesh.elements[:, :, None] + np.arange(2)[None, None, :]).reshape(-1, 8)
    return (np.arange(M)[None, :, None] * nsd + local[:, None, :]).reshape(len(local), -1)


def _edge_rule(n: int):
    t, w = np.polynomial.legendre.leggauss(n)
    return t, w


def load_vector(mesh: QuadMesh, model: RandomFieldModel, basis: StochasticBasis,
                quad: StochasticQuadrature | None = None, n_gauss: int = 2, n_edge: int = 3) -> np.ndarray:
    """Body-force and traction load vector, length 2 * n_nodes * M."""
    quad = basis.quadrature() if quad is None else quad
    if n_edge < 3:
        raise ValueError("traction integration needs at least 3 points per edge")
    geom = element_geometry(mesh, n_gauss)
    nsd = 2 * mesh.n_nodes
    psi = basis(quad.nodes)
    F = np.zeros((basis.M, nsd))
    t, w = _edge_rule(n_edge)
    Nl, Nr = 0.5 * (1 - t), 0.5 * (1 + t)
    groups: dict[str, list[int]] = {}
    for i, (tag, side) in enumerate(zip(mesh.edge_tags, mesh.edge_sides)):
        if tag == "traction":
            groups.setdefault(side, []).append(i)
    dofs = (2 * mesh.elements[:, :, None] + np.arange(2)).reshape(-1)
    for q, yq in enumerate(quad.nodes):
        Fq = np.zeros(nsd)
        E = _modulus_at(model, geom, yq)
        f = model.f(geom.x.reshape(-1, 2), yq, E.reshape(-1)).reshape(*E.shape, 2)
        if np.any(f):
            Fe = np.einsum("eg,ga,egc->eac", geom.wdet, geom.N, f)
            np.add.at(Fq, dofs, Fe.reshape(-1))
        for side, idx in groups.items():
            gfun = model.traction(side)
            if gfun is None:
                continue
            ends = mesh.nodes[mesh.boundary_edges[idx]]  # (nb, 2, 2)
            pts = Nl[None, :, None] * ends[:, None, 0, :] + Nr[None, :, None] * ends[:, None, 1, :]
            half = 0.5 * np.linalg.norm(ends[:, 1] - ends[:, 0], axis=1)
            flat = pts.reshape(-1, 2)
            g = gfun(flat, yq, model.modulus(flat, yq)).reshape(len(idx), len(t), 2)
            wg = (w[None, :] * half[:, None])[..., None] * g
            left = np.einsum("bgc,g->bc", wg, Nl)
            right = np.einsum("bgc,g->bc", wg, Nr)
            a, b = mesh.boundary_edges[idx, 0], mesh.boundary_edges[idx, 1]
            for c in range(2):
                np.add.at(Fq, 2 * a + c, left[:, c])
                np.add.at(Fq, 2 * b + c, right[:, c])
        F += quad.weights[q] * psi[q][:, None] * Fq[None, :]
    return F.reshape(-1)


def project_dirichlet(mesh: QuadMesh, dirichlet: Callable | None, basis: StochasticBasis,
                      quad: StochasticQuadrature) -> np.ndarray:
    """Stochastic coefficients of the Dirichlet data at the clamped nodes, (M, n_d, 2)."""
    nodes = mesh.dirichlet_nodes()
    out = np.zeros((basis.M, len(nodes), 2))
    if dirichlet is None or not len(nodes):
        return out
    psi = basis(quad.nodes)
    for q, yq in enumerate(quad.nodes):
        vals = np.asarray(dirichlet(mesh.nodes[nodes], yq), dtype=float).reshape(len(nodes), 2)
        out += quad.weights[q] * psi[q][:, None, None] * vals[None]
    return out


@dataclass(eq=False)
class CondensedSystem:
    mesh: QuadMesh
    law: MaterialLaw
    model: RandomFieldModel
    basis: StochasticBasis
    quad: StochasticQuadrature
    scheme: str
    n_gauss: int
    K: sparse.csr_matrix  # free-free block
    F: np.ndarray  # free rhs including Dirichlet lifting
    free: np.ndarray
    fixed: np.ndarray
    u_fixed: np.ndarray
    K_elem: np.ndarray
    recovery: np.ndarray | None  # (ne, 5M, 8M) for ps_hybrid
    H: np.ndarray | None = None
    G: np.ndarray | None = None
    F_full: np.ndarray | None = None

    @property
    def M(self) -> int:
        return self.basis.M

    @property
    def n_dofs(self) -> int:
        return len(self.free)


def assemble(mesh: QuadMesh, law: MaterialLaw, model: RandomFieldModel, basis: StochasticBasis,
             scheme: str = "ps_hybrid", dirichlet: Callable | None = None,
             quad: StochasticQuadrature | None = None, n_gauss: int | None = None) -> CondensedSystem:
    """Assemble the condensed (displacement-only) stochastic Galerkin system."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if basis.N != model.N:
        raise ValueError(f"basis has {basis.N} parameters but the model has {model.N}")
    quad = basis.quadrature() if quad is None else quad
    n_gauss = n_gauss or default_gauss(mesh, scheme)
    H = G = R = None
    if scheme == "ps_hybrid":
        H, G = ps_element_blocks(mesh, law, model, basis, quad, n_gauss)
        Ke, R = condense(H, G)
    else:
        Ke = bilinear_element_stiffness(mesh, law, model, basis, quad, n_gauss)
    M = basis.M
    nsd = 2 * mesh.n_nodes
    ndof = M * nsd
    edofs = element_dofs(mesh, M)
    rows = np.repeat(edofs, edofs.shape[1], axis=1).ravel()
    cols = np.tile(edofs, (1, edofs.shape[1])).ravel()
    K = sparse.coo_matrix((Ke.ravel(), (rows, cols)), shape=(ndof, ndof)).tocsr()
    F = load_vector(mesh, model, basis, quad, n_gauss=max(n_gauss, 2))

    dnodes = mesh.dirichlet_nodes()
    if not len(dnodes):
        raise SingularSystemError("no Dirichlet edges: rigid-body modes are unconstrained")
    fixed = (np.arange(M)[:, None, None] * nsd + 2 * dnodes[None, :, None] + np.arange(2)[None, None, :]).ravel()
    u_fixed = project_dirichlet(mesh, dirichlet, basis, quad).ravel()
    mask = np.ones(ndof, dtype=bool)
    mask[fixed] = False
    free = np.nonzero(mask)[0]
    K_ff = K[free][:, free]
    rhs = F[free] - K[free][:, fixed] @ u_fixed
    return CondensedSystem(mesh, law, model, basis, quad, scheme, n_gauss, K_ff.tocsr(), rhs, free, fixed,
                           u_fixed, Ke, R, H, G, F)


@dataclass(eq=False)
class DiscreteSolution:
    system: CondensedSystem
    U: np.ndarray  # (M, n_nodes, 2)
    beta: np.ndarray | None  # (ne, M, 5)
    residual: float
    recovery: str = "galerkin"

    @property
    def mesh(self) -> QuadMesh:
        return self.system.mesh

    @property
    def basis(self) -> StochasticBasis:
        return self.system.basis

    def nodal_values(self, y) -> np.ndarray:
        """Displacement at all nodes for one parameter vector, (n_nodes, 2)."""
        psi = self.basis(np.atleast_2d(y))[0]
        return np.tensordot(psi, self.U, axes=(0, 0))

    def gradients(self, geom: ElementGeometry, y) -> np.ndarray:
        """du_i/dx_j at geometry points, shape (ne, ng, 2, 2)."""
        ue = self.nodal_values(y)[self.mesh.elements]  # (ne, 4, 2)
        return np.einsum("eai,egaj->egij", ue, geom.grad)

    def values(self, geom: ElementGeometry, y) -> np.ndarray:
        ue = self.nodal_values(y)[self.mesh.elements]
        return np.einsum("ga,eai->egi", geom.N, ue)


def solve(system: CondensedSystem, recovery: str = "galerkin") -> DiscreteSolution:
    """Direct sparse solve, nodal displacements and Galerkin stress parameters."""
    if recovery not in RECOVERY_MODES:
        raise ValueError(f"unknown recovery mode {recovery!r}")
    ndof = system.M * 2 * system.mesh.n_nodes
    u = np.zeros(ndof)
    u[system.fixed] = system.u_fixed
    if system.n_dofs:
        try:
            lu = splinalg.splu(system.K.tocsc())
        except RuntimeError as err:
            raise SingularSystemError(f"factorization failed: {err}") from err
        uf = lu.solve(system.F)
        if not np.all(np.isfinite(uf)):
            raise SingularSystemError("factorization produced non-finite values")
        u[system.free] = uf
        nrm = np.linalg.norm(system.F)
        residual = float(np.linalg.norm(system.K @ uf - system.F) / nrm) if nrm > 0 else 0.0
    else:
        residual = 0.0
    if residual > 1e-10:
        log.warning("relative residual %.2e exceeds 1e-10", residual)
    beta = None
    if system.recovery is not None:
        ue = u[element_dofs(system.mesh, system.M)]
        beta = np.einsum("eij,ej->ei", system.recovery, ue).reshape(system.mesh.n_elements, system.M, 5)
    U = u.reshape(system.M, system.mesh.n_nodes, 2)
    return DiscreteSolution(system, U, beta, residual, recovery)


def mixed_residuals(solution: DiscreteSolution) -> tuple[float, float]:
    """Relative residuals of the constitutive and equilibrium equations after solve."""
    sys_ = solution.system
    if sys_.scheme != "ps_hybrid":
        raise ValueError("mixed residuals are defined for the hybrid scheme only")
    ne, M = sys_.mesh.n_elements, sys_.M
    ue = solution.U.reshape(-1)[element_dofs(sys_.mesh, M)]
    beta = solution.beta.reshape(ne, 5 * M)
    r1 = np.einsum("eij,ej->ei", sys_.H, beta) - np.einsum("eij,ej->ei", sys_.G, ue)
    scale1 = np.abs(np.einsum("eij,ej->ei", sys_.G, ue)).max() or 1.0
    internal = np.zeros(M * 2 * sys_.mesh.n_nodes)
    np.add.at(internal, element_dofs(sys_.mesh, M), np.einsum("eji,ej->ei", sys_.G, beta))
    r2 = (internal - sys_.F_full)[sys_.free]
    scale2 = np.abs(sys_.F_full).max() or np.abs(internal).max() or 1.0
    return float(np.abs(r1).max() / scale1), float(np.abs(r2).max() / scale2)


class StressEvaluator:
    """sigma_h(x, y) in Voigt form at geometry points of every element."""

    def __init__(self, solution: DiscreteSolution, mode: str = "galerkin", y=None):
        if mode not in RECOVERY_MODES:
            raise ValueError(f"unknown recovery mode {mode!r}")
        self.solution = solution
        self.mode = mode
        self.y = None if y is None else np.atleast_1d(np.asarray(y, dtype=float))
        sys_ = solution.system
        if self.y is not None and not sys_.basis.contains(self.y):
            warnings.warn(f"parameter {self.y.tolist()} lies outside the parameter range", stacklevel=2)
        self._det_geom = element_geometry(sys_.mesh, sys_.n_gauss)

    def values(self, geom: ElementGeometry, y=None) -> np.ndarray:
        y = self.y if y is None else np.atleast_1d(np.asarray(y, dtype=float))
        sol, sys_ = self.solution, self.solution.system
        if sys_.scheme == "bilinear":
            ue = sol.nodal_values(y)[sys_.mesh.elements].reshape(-1, 8)
            strain = np.einsum("egib,eb->egi", geom.B, ue)
            E = _modulus_at(sys_.model, geom, y)
            return E[..., None] * (strain @ sys_.law.C.T)
        P = geom.ps_modes()
        if self.mode == "galerkin":
            psi = sys_.basis(np.atleast_2d(y))[0]
            beta = np.einsum("m,emi->ei", psi, sol.beta)
        else:
            Hy, G0 = ps_deterministic_blocks(self._det_geom, sys_.law, _modulus_at(sys_.model, self._det_geom, y))
            ue = sol.nodal_values(y)[sys_.mesh.elements].reshape(-1, 8)
            beta = np.linalg.solve(Hy, np.einsum("eij,ej->ei", G0, ue)[..., None])[..., 0]
        return np.einsum("egib,eb->egi", P, beta)

    def __call__(self, element: int, xhat, y=None) -> np.ndarray:
        xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
        geom = geometry_at(self.solution.mesh, xhat, np.ones(len(xhat)))
        return self.values(geom, y)[element]


def recover_stress(solution: DiscreteSolution, mode: str = "galerkin", y=None) -> StressEvaluator:
    return StressEvaluator(solution, mode, y)
