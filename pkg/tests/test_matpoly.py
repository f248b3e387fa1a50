import itertools

import numpy as np
import pytest

from pmirelax.matpoly import (
    SymPolyMatrix,
    charpoly_coeffs,
    eigvals_sorted,
    eval_matrix,
    inner_h_G,
    normalize,
    trace_blocks,
    trace_power,
)
from pmirelax.penalty import ChebPoly, UniPoly
from pmirelax.poly import MultiPoly

from conftest import const, random_poly, random_sym, var


def _toy():
    x = var(1, 0)
    one = const(1, 1.0)
    return SymPolyMatrix([[x, one], [one, x]])


def test_eval_matrix_examples():
    x = var(1, 0)
    assert eval_matrix(SymPolyMatrix([[x]]), [2]).tolist() == [[2.0]]
    assert eval_matrix(_toy(), [0]).tolist() == [[0.0, 1.0], [1.0, 0.0]]
    I2 = SymPolyMatrix.constant(3, np.eye(2))
    assert np.array_equal(eval_matrix(I2, [0.1, 0.2, 0.3]), np.eye(2))


def test_construction_checks():
    x, y = var(2, 0), var(2, 1)
    with pytest.raises(ValueError):
        SymPolyMatrix([[x, y], [x, y]])
    upper = SymPolyMatrix([[x, y], [x]])
    assert upper[1, 0] == y
    with pytest.raises(ValueError):
        SymPolyMatrix([[x, var(3, 0)], [var(3, 0), x]])


def test_eigvals_examples():
    np.testing.assert_allclose(eigvals_sorted(_toy(), [0]), [1.0, -1.0])
    D = SymPolyMatrix.constant(1, np.diag([-2.0, 3.0]))
    np.testing.assert_allclose(eigvals_sorted(D, [0.0]), [3.0, -2.0])
    x = var(1, 0)
    np.testing.assert_allclose(eigvals_sorted(SymPolyMatrix([[2 * x - 1]]), [1]), [1.0])


def test_degree_and_half_degree():
    x = var(2, 0)
    G = SymPolyMatrix([[x**3, x], [x, const(2, 1.0)]])
    assert G.degree() == 3 and G.half_degree == 2 and G.l == 2
    C = SymPolyMatrix.constant(2, np.eye(2))
    assert C.half_degree == 0 and C.l == 1


def test_trace_power_examples():
    x = var(1, 0)
    g = 1 + 2 * x - x**2
    for k in range(1, 5):
        assert trace_power(SymPolyMatrix([[g]]), k).allclose(g**k)
    assert trace_power(_toy(), 2) == 2 * x**2 + 2
    with pytest.raises(ValueError):
        trace_power(_toy(), 0)


def test_trace_power_eigen_identity(rng):
    for _ in range(100):
        n, m, k = rng.integers(1, 4), rng.integers(1, 5), rng.integers(1, 9)
        G = random_sym(rng, n, m, 2)
        x = rng.uniform(-1, 1, n)
        lam = eigvals_sorted(G, x)
        ref = float(np.sum(lam**k))
        got = trace_power(G, k).eval(x)
        assert abs(got - ref) <= 1e-8 * max(1.0, abs(ref))


def test_inner_h_G_examples():
    x = var(1, 0)
    g = 3 * x - 1
    assert inner_h_G(UniPoly([1.0]), SymPolyMatrix([[g]])) == g
    assert inner_h_G(UniPoly([0.0, 1.0]), _toy()) == 2 * x**2 + 2


def test_inner_h_G_eigen_identity(rng):
    for _ in range(100):
        n, m = rng.integers(1, 4), rng.integers(1, 4)
        G = random_sym(rng, n, m, 2)
        h = UniPoly(rng.uniform(-1, 1, rng.integers(1, 6)))
        x = rng.uniform(-1, 1, n)
        lam = eigvals_sorted(G, x)
        ref = float(np.sum(lam * h(lam)))
        assert abs(inner_h_G(h, G).eval(x) - ref) <= 1e-8 * max(1.0, abs(ref))


def test_inner_h_G_linear_in_h(rng):
    G = random_sym(rng, 2, 3, 2)
    h1, h2 = UniPoly(rng.uniform(-1, 1, 4)), UniPoly(rng.uniform(-1, 1, 3))
    a = 0.37
    combo = UniPoly(a * np.pad(h1.coefs, (0, 1)) + np.pad(h2.coefs, (0, 2)))
    lhs = inner_h_G(combo, G)
    rhs = inner_h_G(h1, G).scale(a) + inner_h_G(h2, G)
    assert lhs.allclose(rhs, tol=1e-12)


def test_inner_h_G_chebyshev_branch_matches_monomial(rng):
    G = random_sym(rng, 2, 2, 1)
    c = rng.uniform(-1, 1, 7)
    cheb = ChebPoly(c)
    assert inner_h_G(cheb, G).allclose(inner_h_G(cheb.to_unipoly(), G), tol=1e-9)


def test_trace_blocks_examples():
    x = var(1, 0)
    g = 2 * x - 1
    tb = trace_blocks(SymPolyMatrix([[g]]), 1)
    assert tb.P[0][0].allclose(g) and tb.P[0][1].allclose(g**2) and tb.P[1][1].allclose(g**3)
    assert len(tb.Q) == 1 and tb.Q[0][0].allclose(g - g**3)
    assert trace_blocks(SymPolyMatrix([[g]]), 0).Q == []


def test_trace_blocks_hankel_and_psd(rng):
    G = random_sym(rng, 2, 3, 2)
    tb = trace_blocks(G, 2)
    assert tb.P[0][2] is tb.P[1][1]
    shifted = SymPolyMatrix([[G[i, j] + (2.0 if i == j else 0.0) for j in range(3)] for i in range(3)])
    Gn, _ = normalize(shifted, "ball")
    tb = trace_blocks(Gn, 2)
    checked = 0
    for _ in range(400):
        x = rng.uniform(-1, 1, 2)
        if np.linalg.eigvalsh(Gn.eval(x))[0] < 0:
            continue
        P = np.array([[p.eval(x) for p in row] for row in tb.P])
        Q = np.array([[p.eval(x) for p in row] for row in tb.Q])
        assert np.linalg.eigvalsh(P)[0] >= -1e-8
        assert np.linalg.eigvalsh(Q)[0] >= -1e-8
        checked += 1
    assert checked > 0


def test_normalize_examples():
    x = var(1, 0)
    Gn, s = normalize(SymPolyMatrix([[2 * x]]), "ball")
    assert s == 2 and Gn == SymPolyMatrix([[x]])
    I2 = SymPolyMatrix.constant(1, np.eye(2))
    Gn, s = normalize(I2, "binary")
    assert s == 2 and np.allclose(Gn.eval([0.3]), np.eye(2) / 2)
    Z = SymPolyMatrix.constant(1, np.zeros((2, 2)))
    assert normalize(Z, "ball") == (Z, 1.0)


def test_normalize_spectral_radius_sampled(rng):
    from pmirelax.oracle import uniform_ball

    for seed in range(3):
        G = random_sym(np.random.default_rng(seed), 3, 3, 2)
        Gn, _ = normalize(G, "ball")
        X = uniform_ball(10_000, 3, rng)
        rho = np.abs(np.linalg.eigvalsh(Gn.eval_many(X))).max()
        assert rho <= 1.0


def test_charpoly_examples():
    x, y = var(2, 0), var(2, 1)
    g = x - y**2
    assert charpoly_coeffs(SymPolyMatrix([[g]]))[0] == g
    a, b, c = 1 + x, x * y, 2 - y
    c1, c2 = charpoly_coeffs(SymPolyMatrix([[a, b], [b, c]]))
    assert c1.allclose(a + c) and c2.allclose(a * c - b * b)
    with pytest.raises(ValueError):
        charpoly_coeffs(SymPolyMatrix.constant(1, np.eye(7)))


def test_charpoly_sign_rule_sampled(rng):
    for m in (1, 2, 3):
        G = random_sym(rng, 2, m, 2)
        cs = charpoly_coeffs(G)
        for _ in range(1000):
            x = rng.uniform(-1, 1, 2)
            psd = np.linalg.eigvalsh(G.eval(x))[0] >= -1e-9
            assert psd == all(c.eval(x) >= -1e-9 for c in cs)


def test_charpoly_sign_rule_exhaustive_cube(rng):
    n = 8
    X = np.array(list(itertools.product([0.0, 1.0], repeat=n)))
    for m in (2, 3):
        G = random_sym(rng, n, m, 1)
        cs = charpoly_coeffs(G)
        lam = np.linalg.eigvalsh(G.eval_many(X))[:, 0]
        cvals = np.stack([c.eval_many(X) for c in cs], axis=1)
        assert np.array_equal(lam >= -1e-9, np.all(cvals >= -1e-9, axis=1))


def test_json_roundtrip(rng):
    G = random_sym(rng, 2, 3, 2)
    data = G.to_json()
    assert [len(r) for r in data["entries"]] == [3, 2, 1]
    assert SymPolyMatrix.from_json(data) == G


def test_block_diag():
    x = var(1, 0)
    B = SymPolyMatrix.block_diag([SymPolyMatrix([[x]]), _toy()])
    assert B.m == 3 and B[0, 1].is_zero() and B[1, 2] == const(1, 1.0)
    assert not B.is_diagonal()
