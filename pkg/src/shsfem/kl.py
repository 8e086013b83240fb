"""Karhunen-Loeve expansions and finite-dimensional random-field models.

Eigenpairs of covariance operators are computed with the Nystrom method on a
composite Gauss-Legendre grid. A :class:`RandomFieldModel` bundles the Young's
modulus, body force and traction as functions of a point ``x`` (shape (n, 2))
and a parameter vector ``y`` (shape (N,)); loads additionally receive the
modulus values so that coefficient-dependent tractions can be written down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import interpolate, linalg

from .stochastic_basis import Distribution, distribution_quadrature

KERNEL_KINDS = ("exponential", "squared_exponential", "rank_one", "user_tabulated")


class FieldError(ValueError):
    """Random field evaluation outside its admissible range."""


@dataclass(frozen=True)
class CovarianceKernel:
    """Covariance k(x, x') on points of dimension d.

    ``exponential``: variance * exp(-|x - x'| / length);
    ``squared_exponential``: variance * exp(-|x - x'|^2 / (2 length^2));
    ``rank_one``: variance * b(x) b(x') with ``profile`` = b;
    ``user_tabulated``: 1D table ``table[i, j]`` = k(grid[i], grid[j]), bilinear
    interpolation in between.
    """

    kind: str
    variance: float = 1.0
    length: float = 1.0
    profile: Callable | None = None
    grid: np.ndarray | None = None
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.variance < 0 or self.length <= 0:
            raise ValueError("kernel variance must be >= 0 and length > 0")
        if self.kind == "rank_one" and self.profile is None:
            raise ValueError("rank_one kernel needs a profile function")
        if self.kind == "user_tabulated":
            if self.grid is None or self.table is None:
                raise ValueError("user_tabulated kernel needs grid and table")
            table = np.asarray(self.table, dtype=float)
            if not np.allclose(table, table.T):
                raise ValueError("tabulated covariance must be symmetric")

    def __call__(self, X1, X2) -> np.ndarray:
        X1, X2 = _points(X1), _points(X2)
        if self.kind == "rank_one":
            return self.variance * np.outer(self.profile(X1), self.profile(X2))
        if self.kind == "user_tabulated":
            interp = interpolate.RegularGridInterpolator((self.grid, self.grid), np.asarray(self.table))
            a = np.repeat(X1[:, 0], len(X2))
            b = np.tile(X2[:, 0], len(X1))
            return interp(np.column_stack([a, b])).reshape(len(X1), len(X2))
        r = np.linalg.norm(X1[:, None, :] - X2[None, :, :], axis=-1)
        if self.kind == "exponential":
            return self.variance * np.exp(-r / self.length)
        return self.variance * np.exp(-0.5 * (r / self.length) ** 2)


def _points(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


def _as_box(domain) -> np.ndarray:
    box = np.asarray(domain, dtype=float)
    if box.ndim == 1:
        box = box[None, :]
    if box.shape[1] != 2 or np.any(box[:, 1] <= box[:, 0]):
        raise ValueError(f"domain must be an interval or box, got {domain}")
    return box


def composite_gauss(lo: float, hi: float, n: int, panel_points: int = 10):
    """Composite Gauss-Legendre rule with ``n`` points in total on [lo, hi]."""
    k = min(panel_points, n)
    panels = max(1, n // k)
    k = n // panels
    t, w = np.polynomial.legendre.leggauss(k)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mids = 0.5 * (edges[1:] + edges[:-1])
    x = (mids[:, None] + half[:, None] * t[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    return x, wts


@dataclass(frozen=True)
class KLModes:
    """Discrete eigenpairs on the Nystrom grid, sorted by decreasing eigenvalue."""

    kernel: CovarianceKernel
    axes: tuple[int, ...]
    nodes: np.ndarray  # (n_quad, d)
    weights: np.ndarray  # (n_quad,)
    eigenvalues: np.ndarray  # (n_modes,)
    vectors: np.ndarray  # (n_quad, n_modes), values of b_n at the nodes
    spectrum: np.ndarray  # all discrete eigenvalues, clipped at 0

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def trace(self) -> float:
        return float(np.sum(self.weights * np.diag(self.kernel(self.nodes, self.nodes))))

    def evaluate(self, x, n: int | None = None) -> np.ndarray:
        """Nystrom interpolation b_n(x) = (1/lambda_n) sum_j w_j k(x, x_j) b_n(x_j)."""
        n = self.n_modes if n is None else n
        x = np.atleast_2d(np.asarray(x, dtype=float))[:, list(self.axes)]
        lam = self.eigenvalues[:n]
        K = self.kernel(x, self.nodes)
        out = (K * self.weights[None, :]) @ self.vectors[:, :n]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(lam[None, :] > 0, out / lam[None, :], 0.0)
        return out

    def orthonormality_residual(self) -> float:
        G = self.vectors.T @ (self.weights[:, None] * self.vectors)
        return float(np.abs(G - np.eye(self.n_modes)).max())


def solve_eigenpairs(kernel: CovarianceKernel, domain, n_modes: int, n_quad: int,
                     panel_points: int = 10, axes: Sequence[int] | None = None) -> KLModes:
    """Nystrom solution of the covariance eigenproblem.

    ``n_quad`` is the number of quadrature points per coordinate; 2D boxes use
    the tensor grid. Eigenvalues below -1e-10 * lambda_1 flag an indefinite
    kernel; smaller negative values are clipped to zero.
    """
    box = _as_box(domain)
    if n_modes > n_quad ** len(box):
        raise ValueError(f"cannot extract {n_modes} modes from {n_quad ** len(box)} quadrature points")
    rules = [composite_gauss(lo, hi, n_quad, panel_points) for lo, hi in box]
    if len(rules) == 1:
        nodes, weights = rules[0][0][:, None], rules[0][1]
    else:
        X, Y = np.meshgrid(rules[0][0], rules[1][0], indexing="ij")
        WX, WY = np.meshgrid(rules[0][1], rules[1][1], indexing="ij")
        nodes = np.column_stack([X.ravel(), Y.ravel()])
        weights = (WX * WY).ravel()
    sw = np.sqrt(weights)
    A = sw[:, None] * kernel(nodes, nodes) * sw[None, :]
    A = 0.5 * (A + A.T)
    vals, vecs = linalg.eigh(A)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    if vals[0] > 0 and vals[-1] < -1e-10 * vals[0]:
        raise ValueError(f"kernel is not positive semidefinite: eigenvalue {vals[-1]:.3e}")
    vals = np.clip(vals, 0.0, None)
    # sign convention: positive weighted mean
    b = vecs[:, :n_modes] / sw[:, None]
    s = np.sign(np.sum(weights[:, None] * b, axis=0))
    s[s == 0] = 1.0
    b = b * s[None, :]
    axes = tuple(range(len(box))) if axes is None else tuple(axes)
    return KLModes(kernel, axes, nodes, weights, vals[:n_modes], b, vals)


def truncation_error(modes: KLModes, N: int) -> float:
    """Root of the eigenvalue tail beyond the first N modes."""
    if N < 0:
        raise ValueError("truncation level must be non-negative")
    return float(math.sqrt(np.sum(modes.spectrum[N:])))


@dataclass(frozen=True)
class KLExpansion:
    """mean(x) + sum_n sqrt(lambda_n) b_n(x) y[variables[n]]."""

    mean: Callable
    modes: KLModes | None = None
    n_terms: int = 0
    variables: tuple[int, ...] = ()

    def __post_init__(self):
        if self.modes is None and self.n_terms:
            raise ValueError("expansion without modes cannot have terms")
        if self.modes is not None and self.n_terms > self.modes.n_modes:
            raise ValueError(f"only {self.modes.n_modes} modes available, asked for {self.n_terms}")
        if len(self.variables) != self.n_terms:
            object.__setattr__(self, "variables", tuple(range(self.n_terms)))

    def scaled_modes(self, x) -> np.ndarray:
        """sqrt(lambda_n) b_n(x), shape (n, n_terms)."""
        x = np.atleast_2d(x)
        if not self.n_terms:
            return np.zeros((len(x), 0))
        lam = self.modes.eigenvalues[: self.n_terms]
        return self.modes.evaluate(x, self.n_terms) * np.sqrt(lam)[None, :]

    def __call__(self, x, y) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.broadcast_to(np.asarray(self.mean(x), dtype=float), (len(x),)).copy()
        if self.n_terms:
            out += self.scaled_modes(x) @ np.asarray(y, dtype=float)[list(self.variables)]
        return out


def constant(value: float) -> Callable:
    def fn(x, *args):
        return np.full(len(np.atleast_2d(x)), float(value))

    return fn


def _zero_load(x, y, E):
    return np.zeros((len(x), 2))


@dataclass(frozen=True, eq=False)
class RandomFieldModel:
    """Modulus, body force and traction depending on N random parameters.

    ``E(x, y) -> (n,)``; ``f(x, y, E) -> (n, 2)``; ``g[side](x, y, E) -> (n, 2)``
    with ``side`` one of the mesh edge sides (``"*"`` matches any side).
    """

    dists: tuple[Distribution, ...]
    E: Callable
    f: Callable = _zero_load
    g: Mapping[str, Callable] = field(default_factory=dict)
    e_bounds: tuple[float, float] | None = None
    domain: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 10.0), (-1.0, 1.0))
    name: str = ""

    @property
    def N(self) -> int:
        return len(self.dists)

    def traction(self, side: str) -> Callable | None:
        return self.g.get(side, self.g.get("*"))

    def modulus(self, x, y) -> np.ndarray:
        """E evaluated at points x for one parameter vector y; raises on E <= 0."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        vals = np.broadcast_to(np.asarray(self.E(x, np.asarray(y, dtype=float)), dtype=float), (len(x),))
        bad = np.nonzero(~(vals > 0))[0]
        if bad.size:
            i = int(bad[0])
            raise FieldError(f"Young's modulus {vals[i]:.6g} <= 0 at x={x[i].tolist()}, y={np.asarray(y).tolist()}")
        return vals

    def at(self, y) -> "RandomFieldModel":
        """Deterministic model with the parameters frozen at ``y``."""
        y = np.asarray(y, dtype=float).copy()
        E, f = self.E, self.f

        def E_at(x, _):
            return E(x, y)

        def f_at(x, _, Ev):
            return f(x, y, Ev)

        def frozen(gfun):
            return lambda x, _, Ev: gfun(x, y, Ev)

        g = {k: frozen(v) for k, v in self.g.items()}
        return replace(self, dists=(), E=E_at, f=f_at, g=g, name=f"{self.name}@{y.tolist()}")

    def check_bounds(self, x, quad) -> tuple[float, float]:
        """Min and max of E over points x and quadrature nodes; verifies e_bounds."""
        lo, hi = math.inf, -math.inf
        for yq in quad.nodes:
            vals = self.modulus(x, yq)
            lo, hi = min(lo, vals.min()), max(hi, vals.max())
        if self.e_bounds is not None:
            emin, emax = self.e_bounds
            tol = 1e-12 * max(abs(emin), abs(emax))
            if lo < emin - tol or hi > emax + tol:
                raise FieldError(f"E range [{lo:.6g}, {hi:.6g}] violates bounds [{emin}, {emax}]")
        return lo, hi


def evaluate_field(model: RandomFieldModel, which: str, x, y) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    E = model.modulus(x, y)
    if which == "E":
        return E
    if which == "f":
        return model.f(x, np.asarray(y, dtype=float), E)
    if which.startswith("g"):
        side = which.partition(":")[2] or "*"
        gfun = model.traction(side)
        return np.zeros((len(x), 2)) if gfun is None else gfun(x, np.asarray(y, dtype=float), E)
    raise ValueError(f"unknown field {which!r}")


def kl_model(dists: Sequence[Distribution], E_expansion: KLExpansion, f_expansions=None,
             g_expansions: Mapping[str, Sequence[KLExpansion]] | None = None,
             e_bounds=None, domain=((0.0, 10.0), (-1.0, 1.0)), name: str = "kl") -> RandomFieldModel:
    """Model whose fields are truncated KL expansions (loads per component)."""

    def E(x, y):
        return E_expansion(x, y)

    f = _zero_load
    if f_expansions is not None:
        f1, f2 = f_expansions

        def f(x, y, Ev):
            return np.column_stack([f1(x, y), f2(x, y)])

    g = {}
    for side, (g1, g2) in (g_expansions or {}).items():
        g[side] = (lambda a, b: lambda x, y, Ev: np.column_stack([a(x, y), b(x, y)]))(g1, g2)
    return RandomFieldModel(tuple(dists), E, f, g, e_bounds, domain, name)


def _side_points(domain, side: str, n: int = 8):
    (x0, x1), (y0, y1) = domain
    t, w = np.polynomial.legendre.leggauss(n)
    if side in ("left", "right"):
        xc = x0 if side == "left" else x1
        pts = np.column_stack([np.full(n, xc), 0.5 * (y1 - y0) * t + 0.5 * (y1 + y0)])
        return pts, w * 0.5 * (y1 - y0)
    yc = y0 if side == "bottom" else y1
    pts = np.column_stack([0.5 * (x1 - x0) * t + 0.5 * (x1 + x0), np.full(n, yc)])
    return pts, w * 0.5 * (x1 - x0)


def gamma_n(model: RandomFieldModel, quad=None, n_space: int = 8, step: float = 1e-6) -> list[float]:
    """Per-parameter sensitivity constants of the modulus and loads.

    For each parameter n: max of sup|d_n E| / e_min', sup_y ||d_n f_i||_{L2(D)}
    and sup_y ||d_n g_i||_{L2(traction boundary)}. For affine (KL) fields the
    derivative is exactly sqrt(lambda_n) b_n; derivatives are taken by central
    differences over the quadrature grid. ``e_min'`` is the lower modulus bound
    (or the observed minimum when no bounds are set).
    """
    if model.N == 0:
        return []
    quad = distribution_quadrature(model.dists, 9) if quad is None else quad
    (x0, x1), (y0, y1) = model.domain
    t, w = np.polynomial.legendre.leggauss(n_space)
    X, Y = np.meshgrid(0.5 * (x1 - x0) * t + 0.5 * (x1 + x0), 0.5 * (y1 - y0) * t + 0.5 * (y1 + y0), indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    wts = np.outer(w * 0.5 * (x1 - x0), w * 0.5 * (y1 - y0)).ravel()
    sides = [s for s in ("right", "bottom", "top", "left") if model.traction(s) is not None]
    emin = model.e_bounds[0] if model.e_bounds is not None else model.check_bounds(pts, quad)[0]

    gammas = []
    for n in range(model.N):
        dE = df = dg = 0.0
        for yq in quad.nodes:
            h = step * max(1.0, abs(yq[n]))
            yp, ym = yq.copy(), yq.copy()
            yp[n] += h
            ym[n] -= h
            Ep, Em = model.E(pts, yp), model.E(pts, ym)
            dE = max(dE, np.abs(Ep - Em).max() / (2 * h))
            dfv = (model.f(pts, yp, Ep) - model.f(pts, ym, Em)) / (2 * h)
            df = max(df, np.sqrt(wts @ dfv**2).max())
            sq = np.zeros(2)
            for s in sides:
                spts, sw = _side_points(model.domain, s)
                gfun = model.traction(s)
                dgv = (gfun(spts, yp, model.E(spts, yp)) - gfun(spts, ym, model.E(spts, ym))) / (2 * h)
                sq += sw @ dgv**2
            dg = max(dg, np.sqrt(sq).max())
        gammas.append(float(max(dE / emin, df, dg)))
    return gammas
