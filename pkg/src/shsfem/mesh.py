"""Quadrilateral meshes of rectangular domains and the bilinear element map.

Elements are stored as four node indices in counterclockwise order, matching
the reference vertices (-1,-1), (1,-1), (1,1), (-1,1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Coefficient matrix of the bilinear map: (a, b) = MAP_MATRIX @ vertices / 4.
MAP_MATRIX = np.array(
    [
        [1.0, 1.0, 1.0, 1.0],
        [-1.0, 1.0, 1.0, -1.0],
        [1.0, -1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0, 1.0],
    ]
)

REFERENCE_VERTICES = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])

SIDES = ("left", "right", "bottom", "top")


class MeshError(ValueError):
    """Invalid mesh input or degenerate element."""

    def __init__(self, message: str, element: int | None = None):
        super().__init__(message)
        self.element = element


@dataclass(frozen=True, eq=False)
class QuadMesh:
    """Immutable quadrilateral mesh.

    ``boundary_edges`` is an (n_b, 2) array of node pairs; ``edge_tags`` holds
    ``"dirichlet"`` or ``"traction"`` per edge and ``edge_sides`` the side of
    the bounding rectangle the edge lies on (or ``""`` for generic meshes).
    """

    nodes: np.ndarray
    elements: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: tuple[str, ...]
    edge_sides: tuple[str, ...] = field(default=())
    label: str = ""

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        edges = np.ascontiguousarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        for arr in (nodes, elements, edges):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "boundary_edges", edges)
        if not self.edge_sides:
            object.__setattr__(self, "edge_sides", ("",) * len(edges))
        if len(self.edge_tags) != len(edges) or len(self.edge_sides) != len(edges):
            raise MeshError("edge tag/side lists must match boundary_edges")
        for tag in self.edge_tags:
            if tag not in ("dirichlet", "traction"):
                raise MeshError(f"unknown boundary tag {tag!r}")
        validate(self)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def h(self) -> float:
        return float(element_diameters(self).max())

    def vertices(self) -> np.ndarray:
        """Vertex coordinates, shape (n_elements, 4, 2)."""
        return self.nodes[self.elements]

    def dirichlet_nodes(self) -> np.ndarray:
        tagged = [e for e, t in zip(self.boundary_edges, self.edge_tags) if t == "dirichlet"]
        if not tagged:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(tagged))

    def is_distorted(self, tol: float = 1e-12) -> bool:
        """True if any element is not a parallelogram (nonzero a2 or b2)."""
        a, b = element_maps(self)
        scale = max(np.abs(a).max(), np.abs(b).max(), 1.0)
        return bool(np.any(np.abs(a[:, 2]) > tol * scale) or np.any(np.abs(b[:, 2]) > tol * scale))


@dataclass(frozen=True)
class ElementMap:
    """Coefficients of x1 = a0 + a1 s + a2 s t + a3 t, x2 = b0 + b1 s + b2 s t + b3 t."""

    a: np.ndarray
    b: np.ndarray

    def __call__(self, xhat) -> np.ndarray:
        xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
        s, t = xhat[:, 0], xhat[:, 1]
        basis = np.stack([np.ones_like(s), s, s * t, t], axis=1)
        return np.stack([basis @ self.a, basis @ self.b], axis=1)


@dataclass(frozen=True)
class ShapeRegularityReport:
    ratios: np.ndarray
    diameters: np.ndarray
    inscribed: np.ndarray

    @property
    def zeta(self) -> float:
        return float(self.ratios.max())


@dataclass(frozen=True)
class DistortionPattern:
    """x1-offsets of the non-corner bottom and top nodes of the 5x1 base mesh.

    Offsets are fractions of the base cell width. The default reproduces the
    irregular 5x1 mesh of the cantilever benchmark: bottom nodes at
    x1 = 0,1,2,4,7,10 and top nodes at x1 = 0,2,4,5,6,10 on [0,10] x [-1,1].
    """

    bottom: tuple[float, float, float, float] = (-0.5, -1.0, -1.0, -0.5)
    top: tuple[float, float, float, float] = (0.0, 0.0, -0.5, -1.0)

    @classmethod
    def zero(cls) -> "DistortionPattern":
        return cls((0.0,) * 4, (0.0,) * 4)


def _signed_corner_areas(verts: np.ndarray) -> np.ndarray:
    """Areas of the corner triangles (A_{i-1}, A_i, A_{i+1}), shape (..., 4)."""
    prev = np.roll(verts, 1, axis=-2)
    nxt = np.roll(verts, -1, axis=-2)
    d1 = verts - prev
    d2 = nxt - verts
    return 0.5 * (d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0])


def validate(mesh: QuadMesh) -> None:
    if mesh.elements.ndim != 2 or mesh.elements.shape[1] != 4:
        raise MeshError("elements must have four nodes each")
    if mesh.elements.size and (mesh.elements.min() < 0 or mesh.elements.max() >= mesh.n_nodes):
        raise MeshError("element references a missing node")
    areas = _signed_corner_areas(mesh.vertices())
    scale = element_diameters(mesh) ** 2
    bad = np.nonzero(np.any(areas <= 1e-14 * scale[:, None], axis=1))[0]
    if bad.size:
        e = int(bad[0])
        raise MeshError(
            f"element {e} is degenerate, non-convex or clockwise (corner areas {areas[e]})",
            element=e,
        )


def element_diameters(mesh: QuadMesh) -> np.ndarray:
    v = mesh.vertices()
    d = np.linalg.norm(v[:, :, None, :] - v[:, None, :, :], axis=-1)
    return d.reshape(len(v), -1).max(axis=1)


def element_maps(mesh: QuadMesh) -> tuple[np.ndarray, np.ndarray]:
    """Map coefficients for all elements, each of shape (n_elements, 4)."""
    coef = np.einsum("ij,ejk->eik", MAP_MATRIX, mesh.vertices()) / 4.0
    return coef[:, :, 0], coef[:, :, 1]


def element_map(mesh: QuadMesh, e: int) -> ElementMap:
    if not 0 <= e < mesh.n_elements:
        raise IndexError(f"element index {e} out of range")
    coef = MAP_MATRIX @ mesh.vertices()[e] / 4.0
    return ElementMap(a=coef[:, 0], b=coef[:, 1])


def jacobian(emap: ElementMap, xhat) -> tuple[np.ndarray, float]:
    """Jacobian d(x1,x2)/d(s,t) of the element map at a reference point."""
    s, t = (float(v) for v in xhat)
    a, b = emap.a, emap.b
    J = np.array([[a[1] + a[2] * t, a[3] + a[2] * s], [b[1] + b[2] * t, b[3] + b[2] * s]])
    det = float(np.linalg.det(J))
    if det <= 0.0:
        raise MeshError(f"non-positive Jacobian determinant {det} at {xhat}")
    return J, det


def shape_regularity(mesh: QuadMesh) -> ShapeRegularityReport:
    v = mesh.vertices()
    prev = np.roll(v, 1, axis=1)
    nxt = np.roll(v, -1, axis=1)
    area = np.abs(_signed_corner_areas(v))
    semi = 0.5 * (
        np.linalg.norm(v - prev, axis=-1)
        + np.linalg.norm(nxt - v, axis=-1)
        + np.linalg.norm(nxt - prev, axis=-1)
    )
    inscribed = (2.0 * area / semi).min(axis=1)
    if np.any(inscribed <= 0.0):
        raise MeshError("degenerate corner triangle: rho_T = 0", element=int(np.argmin(inscribed)))
    diam = element_diameters(mesh)
    return ShapeRegularityReport(ratios=diam / inscribed, diameters=diam, inscribed=inscribed)


def _check_domain(domain) -> tuple[tuple[float, float], tuple[float, float]]:
    (x0, x1), (y0, y1) = domain
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate domain {domain}")
    return (float(x0), float(x1)), (float(y0), float(y1))


def _side_of(p: np.ndarray, q: np.ndarray, box) -> str:
    (x0, x1), (y0, y1) = box
    tol = 1e-10 * max(x1 - x0, y1 - y0)
    if abs(p[0] - x0) < tol and abs(q[0] - x0) < tol:
        return "left"
    if abs(p[0] - x1) < tol and abs(q[0] - x1) < tol:
        return "right"
    if abs(p[1] - y0) < tol and abs(q[1] - y0) < tol:
        return "bottom"
    if abs(p[1] - y1) < tol and abs(q[1] - y1) < tol:
        return "top"
    return ""


def boundary_edges_of(elements: np.ndarray) -> np.ndarray:
    """Edges used by exactly one element, oriented as in that element."""
    count: dict[tuple[int, int], list] = {}
    for el in np.asarray(elements):
        for i in range(4):
            a, b = int(el[i]), int(el[(i + 1) % 4])
            count.setdefault((min(a, b), max(a, b)), []).append((a, b))
    return np.array([v[0] for v in count.values() if len(v) == 1], dtype=np.int64).reshape(-1, 2)


def from_arrays(nodes, elements, dirichlet_sides=("left",), label: str = "") -> QuadMesh:
    """Build a mesh, tagging boundary edges by the side of the bounding box they lie on."""
    nodes = np.asarray(nodes, dtype=float)
    elements = np.asarray(elements, dtype=np.int64)
    edges = boundary_edges_of(elements)
    box = ((nodes[:, 0].min(), nodes[:, 0].max()), (nodes[:, 1].min(), nodes[:, 1].max()))
    sides = tuple(_side_of(nodes[a], nodes[b], box) for a, b in edges)
    tags = tuple("dirichlet" if s in dirichlet_sides else "traction" for s in sides)
    return QuadMesh(nodes, elements, edges, tags, sides, label=label)


def generate_rectangular(nx: int, ny: int, domain=((0.0, 10.0), (-1.0, 1.0))) -> QuadMesh:
    if nx < 1 or ny < 1:
        raise MeshError(f"element counts must be positive, got {nx}x{ny}")
    (x0, x1), (y0, y1) = _check_domain(domain)
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    elements = []
    for j in range(ny):
        for i in range(nx):
            n0 = j * (nx + 1) + i
            elements.append([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])
    return from_arrays(nodes, elements, label=f"{nx}x{ny}")


def refine(mesh: QuadMesh) -> QuadMesh:
    """Split every quadrilateral into four via edge midpoints and the vertex average."""
    nodes = [tuple(p) for p in mesh.nodes]
    midpoint: dict[tuple[int, int], int] = {}

    def mid(a: int, b: int) -> int:
        key = (min(a, b), max(a, b))
        if key not in midpoint:
            midpoint[key] = len(nodes)
            nodes.append(tuple(0.5 * (mesh.nodes[a] + mesh.nodes[b])))
        return midpoint[key]

    elements = []
    for v0, v1, v2, v3 in mesh.elements.tolist():
        m01, m12, m23, m30 = mid(v0, v1), mid(v1, v2), mid(v2, v3), mid(v3, v0)
        c = len(nodes)
        nodes.append(tuple(mesh.nodes[[v0, v1, v2, v3]].mean(axis=0)))
        elements += [[v0, m01, c, m30], [m01, v1, m12, c], [c, m12, v2, m23], [m30, c, m23, v3]]
    edges, tags, sides = [], [], []
    for (a, b), tag, side in zip(mesh.boundary_edges.tolist(), mesh.edge_tags, mesh.edge_sides):
        m = mid(a, b)
        edges += [[a, m], [m, b]]
        tags += [tag, tag]
        sides += [side, side]
    return QuadMesh(np.array(nodes), np.array(elements), np.array(edges), tuple(tags), tuple(sides))


def generate_irregular(level: int, domain=((0.0, 10.0), (-1.0, 1.0)), pattern: DistortionPattern | None = None) -> QuadMesh:
    """Distorted 5x1 base mesh refined ``level`` times (5x1, 10x2, 20x4, ...)."""
    if level < 0:
        raise MeshError(f"refinement level must be non-negative, got {level}")
    pattern = DistortionPattern() if pattern is None else pattern
    (x0, x1), (y0, y1) = _check_domain(domain)
    width = (x1 - x0) / 5.0
    base = x0 + width * np.arange(6)
    bottom = base.copy()
    top = base.copy()
    bottom[1:5] += width * np.asarray(pattern.bottom, dtype=float)
    top[1:5] += width * np.asarray(pattern.top, dtype=float)
    nodes = np.vstack([np.column_stack([bottom, np.full(6, y0)]), np.column_stack([top, np.full(6, y1)])])
    elements = [[i, i + 1, i + 7, i + 6] for i in range(5)]
    try:
        mesh = from_arrays(nodes, elements)
    except MeshError as err:
        raise MeshError(f"distortion pattern rejected: {err}", element=err.element) from err
    for _ in range(level):
        mesh = refine(mesh)
    n = 5 * 2**level
    return QuadMesh(mesh.nodes, mesh.elements, mesh.boundary_edges, mesh.edge_tags, mesh.edge_sides,
                    label=f"{n}x{n // 5}")


def save_mesh(mesh: QuadMesh, path) -> None:
    lines = [f"nodes {mesh.n_nodes}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines.append(f"elements {mesh.n_elements}")
    lines += [" ".join(str(i) for i in el) for el in mesh.elements.tolist()]
    lines.append(f"edges {len(mesh.boundary_edges)}")
    for (a, b), tag, side in zip(mesh.boundary_edges.tolist(), mesh.edge_tags, mesh.edge_sides):
        lines.append(f"{a} {b} {tag} {side or '-'}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path) -> QuadMesh:
    tokens = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    pos = 0

    def section(name: str) -> list[list[str]]:
        nonlocal pos
        head = tokens[pos]
        if head[0] != name:
            raise MeshError(f"expected section {name!r}, got {head[0]!r}")
        n = int(head[1])
        rows = tokens[pos + 1 : pos + 1 + n]
        pos += 1 + n
        return rows

    nodes = np.array([[float(v) for v in r] for r in section("nodes")])
    elements = np.array([[int(v) for v in r] for r in section("elements")], dtype=np.int64)
    edge_rows = section("edges")
    edges = np.array([[int(r[0]), int(r[1])] for r in edge_rows], dtype=np.int64)
    tags = tuple(r[2] for r in edge_rows)
    sides = tuple("" if r[3] == "-" else r[3] for r in edge_rows)
    return QuadMesh(nodes, elements, edges, tags, sides, label=Path(path).stem)
