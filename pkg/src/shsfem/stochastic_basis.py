"""Polynomial spaces over the parameter box and matching probability quadrature.

Three families are provided:

* k-version: discontinuous piecewise polynomials on a partition of each
  parameter range, tensorized over dimensions;
* p-version: global polynomials of degree p_n per dimension, tensorized;
* gPC: Hermite chaos in standard normal germs (tensor or total degree).

Every basis is orthonormal under the joint density, so the constant function
is always mode 0 and the Gram matrix is the identity.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError(f"uniform range must have b > a, got [{self.a}, {self.b}]")

    @property
    def support(self) -> tuple[float, float]:
        return (self.a, self.b)

    @property
    def mean(self) -> float:
        return 0.5 * (self.a + self.b)

    @property
    def variance(self) -> float:
        return (self.b - self.a) ** 2 / 12.0

    def gauss(self, n: int, lo: float | None = None, hi: float | None = None):
        """Gauss-Legendre rule on [lo, hi] with weights equal to probability mass."""
        lo = self.a if lo is None else lo
        hi = self.b if hi is None else hi
        t, w = np.polynomial.legendre.leggauss(n)
        return 0.5 * (hi - lo) * t + 0.5 * (hi + lo), w * 0.5 * (hi - lo) / (self.b - self.a)

    def ppf(self, u):
        return self.a + (self.b - self.a) * np.asarray(u)

    def contains(self, y: float) -> bool:
        return self.a <= y <= self.b


@dataclass(frozen=True)
class StandardNormal:
    @property
    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    @property
    def mean(self) -> float:
        return 0.0

    @property
    def variance(self) -> float:
        return 1.0

    def gauss(self, n: int, lo: float | None = None, hi: float | None = None):
        if lo is not None and np.isfinite(lo) or hi is not None and np.isfinite(hi):
            raise ValueError("normal variables do not support partitioned (k-version) cells")
        x, w = np.polynomial.hermite_e.hermegauss(n)
        return x, w / math.sqrt(2.0 * math.pi)

    def ppf(self, u):
        return special.ndtri(u)

    def contains(self, y: float) -> bool:
        return True


Distribution = Uniform | StandardNormal


def make_distribution(spec: dict) -> Distribution:
    kind = spec["dist"]
    if kind == "uniform":
        return Uniform(float(spec["a"]), float(spec["b"]))
    if kind == "normal":
        return StandardNormal()
    raise ValueError(f"unsupported distribution {kind!r}")


@dataclass(frozen=True)
class StochasticQuadrature:
    nodes: np.ndarray  # (n_q, N)
    weights: np.ndarray  # (n_q,)

    @property
    def size(self) -> int:
        return len(self.weights)

    def integrate(self, values) -> np.ndarray:
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))


def _tensor_rule(rules: Sequence[tuple[np.ndarray, np.ndarray]]) -> StochasticQuadrature:
    if not rules:
        return StochasticQuadrature(np.zeros((1, 0)), np.ones(1))
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    nodes = np.column_stack([g.ravel() for g in grids])
    weights = np.prod(np.column_stack([g.ravel() for g in wgrids]), axis=1)
    return StochasticQuadrature(nodes, weights)


def _cells_rule(dist: Distribution, cells, n_pts: int):
    parts = [dist.gauss(n_pts, lo, hi) for lo, hi in cells]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def distribution_quadrature(dists: Sequence[Distribution], n_pts) -> StochasticQuadrature:
    n_pts = [n_pts] * len(dists) if np.isscalar(n_pts) else list(n_pts)
    if any(n < 1 for n in n_pts):
        raise ValueError("need at least one quadrature point per dimension")
    return _tensor_rule([d.gauss(n) for d, n in zip(dists, n_pts)])


def _mgs(V: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Coefficients T with V @ T orthonormal under sum(w * f * g).

    Modified Gram-Schmidt applied twice for stability; columns are processed in
    order so T is upper triangular (degree-graded).
    """
    n = V.shape[1]
    T = np.eye(n)
    Q = V.copy()
    for j in range(n):
        for _ in range(2):
            for i in range(j):
                c = np.sum(w * Q[:, i] * Q[:, j])
                Q[:, j] -= c * Q[:, i]
                T[:, j] -= c * T[:, i]
        nrm = math.sqrt(np.sum(w * Q[:, j] ** 2))
        if nrm < 1e-13:
            raise ValueError("basis functions are linearly dependent under the quadrature rule")
        Q[:, j] /= nrm
        T[:, j] /= nrm
    return T


def _same_end(x: float, y: float) -> bool:
    if not (np.isfinite(x) and np.isfinite(y)):
        return x == y
    return abs(x - y) <= 1e-12 * max(1.0, abs(y))


@dataclass(frozen=True)
class Basis1D:
    """Orthonormal piecewise polynomials of degree <= ``degree`` on ``cells``.

    Local function index is ``cell * (degree + 1) + alpha``.
    """

    dist: Distribution
    cells: tuple[tuple[float, float], ...]
    degree: int
    coeffs: np.ndarray  # (n_cells, degree+1, degree+1), monomials in the scaled cell variable

    @property
    def dim(self) -> int:
        return len(self.cells) * (self.degree + 1)

    @property
    def mesh_size(self) -> float:
        return max(hi - lo for lo, hi in self.cells)

    def _scaled(self, y, c):
        lo, hi = self.cells[c]
        if np.isfinite(lo) and np.isfinite(hi):
            return (2.0 * y - lo - hi) / (hi - lo)
        return y

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = np.zeros((len(y), self.dim))
        q1 = self.degree + 1
        for c, (lo, hi) in enumerate(self.cells):
            last = c == len(self.cells) - 1
            inside = (y >= lo) & ((y <= hi) if last else (y < hi))
            if not inside.any():
                continue
            t = self._scaled(y[inside], c)
            V = t[:, None] ** np.arange(q1)[None, :]
            out[np.ix_(inside, np.arange(c * q1, (c + 1) * q1))] = V @ self.coeffs[c]
        return out

    @classmethod
    def build(cls, dist: Distribution, cells, degree: int) -> "Basis1D":
        if degree < 0:
            raise ValueError("polynomial degree must be non-negative")
        cells = tuple((float(lo), float(hi)) for lo, hi in cells)
        lo0, hi0 = dist.support
        for (lo, hi) in cells:
            if not hi > lo:
                raise ValueError(f"empty stochastic cell ({lo}, {hi})")
        for (_, h1), (l2, _) in zip(cells, cells[1:]):
            if l2 < h1 - 1e-14 * max(1.0, abs(h1)):
                raise ValueError(f"overlapping stochastic cells at {l2} < {h1}")
            if l2 > h1 + 1e-14 * max(1.0, abs(h1)):
                raise ValueError(f"stochastic cells leave a gap ({h1}, {l2})")
        if not (_same_end(cells[0][0], lo0) and _same_end(cells[-1][1], hi0)):
            raise ValueError("stochastic cells must cover the full parameter range")
        coeffs = []
        for c, (lo, hi) in enumerate(cells):
            y, w = dist.gauss(degree + 1, lo, hi) if np.isfinite(lo) else dist.gauss(degree + 1)
            t = (2.0 * y - lo - hi) / (hi - lo) if np.isfinite(lo) else y
            V = t[:, None] ** np.arange(degree + 1)[None, :]
            coeffs.append(_mgs(V, w))
        return cls(dist, cells, degree, np.array(coeffs))


@dataclass(frozen=True)
class StochasticBasis:
    kind: str  # "k_version", "p_version", "gpc" or "deterministic"
    dists: tuple[Distribution, ...]
    factors: tuple[Basis1D, ...]
    multi_indices: np.ndarray  # (M, N) local indices into each factor

    @property
    def M(self) -> int:
        return len(self.multi_indices)

    @property
    def N(self) -> int:
        return len(self.factors)

    def __call__(self, y) -> np.ndarray:
        """Evaluate all basis functions at points ``y`` of shape (n, N); returns (n, M)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        out = np.ones((len(y), self.M))
        for n, fac in enumerate(self.factors):
            out *= fac(y[:, n])[:, self.multi_indices[:, n]]
        return out

    def quadrature(self, n_pts=None) -> StochasticQuadrature:
        """Tensor Gauss rule; per-cell for partitioned factors.

        Default: degree + 6 points per dimension (and cell), a margin for the
        non-polynomial 1/E weight in the compliance form.
        """
        if n_pts is None:
            n_pts = [f.degree + 6 for f in self.factors]
        elif np.isscalar(n_pts):
            n_pts = [int(n_pts)] * self.N
        if any(n < 1 for n in n_pts):
            raise ValueError("need at least one quadrature point per dimension")
        return _tensor_rule([_cells_rule(f.dist, f.cells, n) for f, n in zip(self.factors, n_pts)])

    def gram(self, quad: StochasticQuadrature | None = None) -> np.ndarray:
        quad = self.quadrature([f.degree + 2 for f in self.factors]) if quad is None else quad
        psi = self(quad.nodes)
        return psi.T @ (quad.weights[:, None] * psi)

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(f.degree for f in self.factors)

    @property
    def cell_widths(self) -> tuple[float, ...]:
        return tuple(f.mesh_size for f in self.factors)

    def contains(self, y) -> bool:
        return all(d.contains(float(v)) for d, v in zip(self.dists, np.atleast_1d(y)))


def deterministic_basis() -> StochasticBasis:
    return StochasticBasis("deterministic", (), (), np.zeros((1, 0), dtype=np.int64))


def _full_tensor(dims: Sequence[int]) -> np.ndarray:
    if not dims:
        return np.zeros((1, 0), dtype=np.int64)
    # first dimension varies slowest
    return np.array(list(itertools.product(*[range(d) for d in dims])), dtype=np.int64)


def _as_list(value, n: int, name: str) -> list:
    if np.isscalar(value):
        return [value] * n
    value = list(value)
    if len(value) != n:
        raise ValueError(f"{name} needs {n} entries, got {len(value)}")
    return value


def build_k_version(dists: Sequence[Distribution], partitions, q) -> StochasticBasis:
    """Piecewise polynomials of degree q_n on a partition of each range.

    ``partitions[n]`` is either a cell count (equal cells) or an explicit list
    of breakpoints including both ends.
    """
    dists = tuple(dists)
    q = _as_list(q, len(dists), "q")
    partitions = _as_list(partitions, len(dists), "partitions")
    factors = []
    for dist, part, deg in zip(dists, partitions, q):
        if np.isscalar(part):
            count = int(part)
            if count < 1:
                raise ValueError("need at least one cell per dimension")
            lo, hi = dist.support
            if count > 1 and not (np.isfinite(lo) and np.isfinite(hi)):
                raise ValueError("only bounded parameter ranges can be partitioned")
            edges = np.linspace(lo, hi, count + 1) if count > 1 else np.array([lo, hi])
        else:
            edges = np.asarray(part, dtype=float)
        factors.append(Basis1D.build(dist, list(zip(edges[:-1], edges[1:])), int(deg)))
    return StochasticBasis("k_version", dists, tuple(factors), _full_tensor([f.dim for f in factors]))


def build_p_version(dists: Sequence[Distribution], p) -> StochasticBasis:
    dists = tuple(dists)
    p = _as_list(p, len(dists), "p")
    factors = tuple(Basis1D.build(d, [d.support], int(deg)) for d, deg in zip(dists, p))
    return StochasticBasis("p_version", dists, factors, _full_tensor([f.dim for f in factors]))


def build_gpc(germs: Sequence[Distribution], p, total_degree: bool = True) -> StochasticBasis:
    """Hermite chaos of degree p in standard normal germs."""
    germs = tuple(germs)
    for g in germs:
        if not isinstance(g, StandardNormal):
            raise ValueError(f"unsupported gPC germ {g!r}; only standard normal germs are available")
    degs = _as_list(p, len(germs), "p")
    factors = tuple(Basis1D.build(g, [g.support], int(d)) for g, d in zip(germs, degs))
    idx = _full_tensor([d + 1 for d in degs])
    if total_degree and len(germs) > 1:
        idx = idx[idx.sum(axis=1) <= max(degs)]
        idx = idx[np.lexsort(idx.T[::-1])]
        idx = idx[np.argsort(idx.sum(axis=1), kind="stable")]
    return StochasticBasis("gpc", germs, factors, idx)


def quadrature(source, n_pts=None) -> StochasticQuadrature:
    """Quadrature matching a basis (per-cell rules) or a list of distributions."""
    if isinstance(source, StochasticBasis):
        return source.quadrature(n_pts)
    return distribution_quadrature(list(source), 20 if n_pts is None else n_pts)


def normal_to_uniform(a: float, b: float):
    """Map y = F^{-1}(Phi(xi)) sending a standard normal germ to uniform on [a, b]."""

    def transform(xi):
        return a + (b - a) * special.ndtr(xi)

    return transform


def hermite_projection(func, degree: int, n_pts: int = 60) -> np.ndarray:
    """Coefficients of ``func(xi)`` in the orthonormal Hermite basis up to ``degree``."""
    xi, w = StandardNormal().gauss(n_pts)
    basis = Basis1D.build(StandardNormal(), [(-math.inf, math.inf)], degree)
    return basis(xi).T @ (w * func(xi))
