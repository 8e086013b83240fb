import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from shsfem.stochastic_basis import (
    StandardNormal,
    Uniform,
    build_gpc,
    build_k_version,
    build_p_version,
    deterministic_basis,
    hermite_projection,
    make_distribution,
    normal_to_uniform,
    quadrature,
)

U = Uniform(500.0, 1500.0)


def test_single_cell_constant():
    b = build_k_version([U], [1], [0])
    assert b.M == 1
    np.testing.assert_allclose(b(np.array([[600.0], [1400.0]])), 1.0)


def test_k_version_dimensions():
    assert build_k_version([U], [2], [1]).M == 4
    assert build_k_version([Uniform(0, 1), Uniform(-1, 1)], [2, 3], [1, 2]).M == 36


def test_k_version_is_discontinuous():
    b = build_k_version([U], [2], [1])
    lo, hi = b(np.array([[999.999]])), b(np.array([[1000.001]]))
    assert np.count_nonzero(np.abs(lo) > 1e-12) == 2 and np.count_nonzero(np.abs(hi) > 1e-12) == 2
    assert np.all((np.abs(lo) > 1e-12) != (np.abs(hi) > 1e-12))


def test_p_version_uniform_is_legendre():
    b = build_p_version([Uniform(-1, 1)], 2)
    y = np.linspace(-1, 1, 7)
    vals = b(y[:, None])
    closed = np.column_stack([np.ones_like(y), math.sqrt(3) * y, math.sqrt(5) * (3 * y**2 - 1) / 2])
    np.testing.assert_allclose(np.abs(vals), np.abs(closed), atol=1e-12)
    np.testing.assert_allclose(vals * np.sign(vals[-1]), closed * np.sign(closed[-1]), atol=1e-12)


def test_p_version_normal_is_hermite():
    b = build_p_version([StandardNormal()], 2)
    xi = np.linspace(-3, 3, 9)
    closed = np.column_stack([np.ones_like(xi), xi, (xi**2 - 1) / math.sqrt(2)])
    vals = b(xi[:, None])
    np.testing.assert_allclose(vals * np.sign(vals[-1]), closed, atol=1e-12)


def test_gpc_low_degrees():
    xi = np.array([[-1.5], [0.2], [2.0]])
    np.testing.assert_allclose(build_gpc([StandardNormal()], 0)(xi), 1.0)
    np.testing.assert_allclose(np.abs(build_gpc([StandardNormal()], 1)(xi)), np.abs(np.column_stack([[1, 1, 1], xi])))


def test_gpc_total_degree_count():
    b = build_gpc([StandardNormal(), StandardNormal()], 3)
    assert b.M == 10
    assert np.all(b.multi_indices.sum(axis=1) <= 3)
    assert b.multi_indices.sum(axis=1).tolist() == sorted(b.multi_indices.sum(axis=1).tolist())


def test_gpc_rejects_uniform_germ():
    with pytest.raises(ValueError):
        build_gpc([U], 2)


def test_uniform_through_hermite_projection():
    # E[F^-1(Phi(xi)) xi] = 1000 E[phi(xi)] = 1000 / (2 sqrt(pi)) by Stein's identity
    coef = hermite_projection(normal_to_uniform(500, 1500), 4)
    assert coef[0] == pytest.approx(1000.0, rel=1e-12)
    assert abs(coef[1]) == pytest.approx(1000 / (2 * math.sqrt(math.pi)), rel=1e-6)
    assert abs(coef[2]) < 1e-8 and abs(coef[4]) < 1e-8  # odd symmetry about the median


@pytest.mark.parametrize("n", [1, 2, 5])
def test_uniform_moments(n):
    q = quadrature([U], n)
    assert q.weights.sum() == pytest.approx(1.0, rel=1e-14)
    assert q.integrate(q.nodes[:, 0]) == pytest.approx(1000.0, rel=1e-14)
    if n >= 2:
        assert q.integrate(q.nodes[:, 0] ** 2) == pytest.approx(13e6 / 12, rel=1e-14)


def test_normal_moments():
    q = quadrature([StandardNormal()], 3)
    assert q.weights.sum() == pytest.approx(1.0)
    assert q.integrate(q.nodes[:, 0] ** 4) == pytest.approx(3.0, rel=1e-13)
    assert abs(q.integrate(q.nodes[:, 0] ** 3)) < 1e-14


def test_k_version_quadrature_is_per_cell():
    b = build_k_version([U], [4], [1])
    q = b.quadrature(3)
    assert q.size == 12 and q.weights.sum() == pytest.approx(1.0)
    assert q.integrate(1.0 / q.nodes[:, 0]) == pytest.approx(math.log(3) / 1000, rel=1e-6)


def test_cell_validation():
    with pytest.raises(ValueError):
        build_k_version([U], [[500, 1100, 1000, 1500]], [1])
    with pytest.raises(ValueError):
        build_k_version([U], [[500, 900, 1400]], [1])
    with pytest.raises(ValueError):
        build_k_version([StandardNormal()], [2], [1])
    with pytest.raises(ValueError):
        build_p_version([U], -1)
    with pytest.raises(ValueError):
        quadrature([U], 0)


def test_distribution_specs():
    assert make_distribution({"dist": "uniform", "a": 1, "b": 2}) == Uniform(1.0, 2.0)
    assert isinstance(make_distribution({"dist": "normal"}), StandardNormal)
    with pytest.raises(ValueError):
        make_distribution({"dist": "beta"})
    with pytest.raises(ValueError):
        Uniform(2, 1)


def test_deterministic_basis():
    b = deterministic_basis()
    assert b.M == 1 and b.N == 0
    q = b.quadrature()
    assert q.size == 1 and q.weights[0] == 1.0


def test_k_single_cell_spans_p_version():
    p = build_p_version([U, Uniform(-1, 2)], [2, 1])
    k = build_k_version([U, Uniform(-1, 2)], [1, 1], [2, 1])
    q = p.quadrature(6)
    A, B = p(q.nodes), k(q.nodes)
    # project each basis onto the other
    coef = B.T @ (q.weights[:, None] * A)
    np.testing.assert_allclose(B @ coef, A, atol=1e-10)


@given(
    cells=st.lists(st.integers(1, 4), min_size=1, max_size=2),
    degs=st.lists(st.integers(0, 4), min_size=2, max_size=2),
)
def test_k_version_gram_is_identity(cells, degs):
    dists = [U, Uniform(-2.0, 3.0)][: len(cells)]
    b = build_k_version(dists, cells, degs[: len(cells)])
    G = b.gram()
    np.testing.assert_allclose(G, np.eye(b.M), atol=1e-10)
    assert np.linalg.eigvalsh(G).min() > 1e-12
    assert b.M == np.prod([c * (d + 1) for c, d in zip(cells, degs)])


@given(p=st.integers(0, 10), total=st.booleans())
def test_gpc_gram_is_identity(p, total):
    b = build_gpc([StandardNormal()], p, total)
    np.testing.assert_allclose(b.gram(), np.eye(p + 1), atol=1e-10)
    # the first function is the constant
    np.testing.assert_allclose(b(np.array([[0.3], [-2.0]]))[:, 0], 1.0)
