"""Symmetric matrices with polynomial entries.

``SymPolyMatrix`` stores ``G(x)`` and provides evaluation, spectra,
memoised symbolic powers, the trace-power polynomials ``tr(G^k)``, the
Hankel trace blocks

    P_v = [tr(G^{i+j+1})]_{0<=i,j<=v},
    Q_{v-1} = [tr(G^{i+j+1}) - tr(G^{i+j+3})]_{0<=i,j<=v-1},

coefficient-norm normalisation and characteristic-polynomial
coefficients.  Every symbolic routine accepts ``binary=True`` to reduce
products modulo ``x_i^2 = x_i`` as they are formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .poly import MultiPoly, polysum

PolyGrid = list[list[MultiPoly]]


class SymPolyMatrix:
    """Symmetric ``m x m`` matrix of polynomials in ``n`` variables.

    Parameters
    ----------
    entries : sequence of sequences of MultiPoly
        Either the full square array (checked for exact symmetry) or the
        upper triangle, row ``i`` holding columns ``i..m-1``.
    """

    __slots__ = ("m", "n", "_rows", "_powers")

    def __init__(self, entries: Sequence[Sequence[MultiPoly]]):
        m = len(entries)
        if m == 0:
            raise ValueError("empty matrix")
        rows = [list(r) for r in entries]
        if all(len(r) == m - i for i, r in enumerate(rows)) and m > 1 and len(rows[1]) != m:
            full = [[None] * m for _ in range(m)]
            for i, r in enumerate(rows):
                for off, p in enumerate(r):
                    full[i][i + off] = p
                    full[i + off][i] = p
        elif all(len(r) == m for r in rows):
            full = rows
            for i in range(m):
                for j in range(i + 1, m):
                    if full[i][j] != full[j][i]:
                        raise ValueError(f"matrix not symmetric at ({i}, {j})")
                    full[j][i] = full[i][j]
        else:
            raise ValueError("entries must be square or upper triangular")
        n = full[0][0].n
        for r in full:
            for p in r:
                if not isinstance(p, MultiPoly):
                    raise TypeError("entries must be MultiPoly")
                if p.n != n:
                    raise ValueError("entries have different dimensions")
        self.m = m
        self.n = n
        self._rows = full
        self._powers: dict[bool, list[PolyGrid]] = {}

    # constructors -------------------------------------------------------
    @classmethod
    def constant(cls, n: int, A: np.ndarray) -> "SymPolyMatrix":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        return cls([[MultiPoly.constant(n, A[i, j]) for j in range(A.shape[1])] for i in range(A.shape[0])])

    @classmethod
    def scalar(cls, g: MultiPoly) -> "SymPolyMatrix":
        return cls([[g]])

    @classmethod
    def block_diag(cls, blocks: Sequence["SymPolyMatrix"]) -> "SymPolyMatrix":
        n = blocks[0].n
        m = sum(b.m for b in blocks)
        zero = MultiPoly.zero(n)
        full = [[zero] * m for _ in range(m)]
        off = 0
        for b in blocks:
            for i in range(b.m):
                for j in range(b.m):
                    full[off + i][off + j] = b[i, j]
            off += b.m
        return cls(full)

    # queries ------------------------------------------------------------
    def __getitem__(self, ij: tuple[int, int]) -> MultiPoly:
        i, j = ij
        return self._rows[i][j]

    @property
    def rows(self) -> PolyGrid:
        return [list(r) for r in self._rows]

    def upper(self) -> PolyGrid:
        return [self._rows[i][i:] for i in range(self.m)]

    def degree(self) -> int:
        return max(p.degree() for r in self._rows for p in r)

    @property
    def half_degree(self) -> int:
        """``ceil(deg G / 2)``; zero only for constant matrices."""
        return (self.degree() + 1) // 2

    @property
    def l(self) -> int:  # noqa: E743 - standard symbol
        """Half degree used for hierarchy bookkeeping (constant matrices count as 1)."""
        return max(1, self.half_degree)

    def is_diagonal(self) -> bool:
        return all(self._rows[i][j].is_zero() for i in range(self.m) for j in range(self.m) if i != j)

    def __repr__(self) -> str:
        return f"SymPolyMatrix(m={self.m}, n={self.n}, deg={self.degree()})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SymPolyMatrix):
            return NotImplemented
        return self.m == other.m and self.n == other.n and all(
            self._rows[i][j] == other._rows[i][j] for i in range(self.m) for j in range(i, self.m)
        )

    __hash__ = None

    # transformations ----------------------------------------------------
    def scale(self, s: float) -> "SymPolyMatrix":
        return SymPolyMatrix([[p.scale(s) for p in r] for r in self._rows])

    def reduce_binary(self) -> "SymPolyMatrix":
        return SymPolyMatrix([[p.reduce_binary() for p in r] for r in self._rows])

    # evaluation ---------------------------------------------------------
    def eval(self, x: Sequence[float]) -> np.ndarray:
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.n:
            raise ValueError(f"point has length {x.shape[0]}, expected {self.n}")
        A = np.empty((self.m, self.m))
        for i in range(self.m):
            for j in range(i, self.m):
                A[i, j] = A[j, i] = self._rows[i][j].eval(x)
        return A

    def eval_many(self, X: np.ndarray) -> np.ndarray:
        """Values at the rows of ``X``, shape ``(N, m, m)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty((X.shape[0], self.m, self.m))
        for i in range(self.m):
            for j in range(i, self.m):
                out[:, i, j] = out[:, j, i] = self._rows[i][j].eval_many(X)
        return out

    def eigvals_sorted(self, x: Sequence[float]) -> np.ndarray:
        """Eigenvalues of ``G(x)`` in descending order."""
        return np.linalg.eigvalsh(self.eval(x))[::-1]

    # symbolic powers ----------------------------------------------------
    def power(self, k: int, binary: bool = False) -> PolyGrid:
        """Full entry array of ``G^k`` (``k >= 1``), memoised."""
        if k < 1:
            raise ValueError("power must be at least 1")
        cache = self._powers.setdefault(binary, [])
        if not cache:
            base = self.reduce_binary()._rows if binary else self._rows
            cache.append([list(r) for r in base])
        base = cache[0]
        m, n = self.m, self.n
        while len(cache) < k:
            prev = cache[-1]
            nxt: PolyGrid = [[None] * m for _ in range(m)]
            for i in range(m):
                for j in range(i, m):
                    # powers of a symmetric matrix are symmetric
                    nxt[i][j] = polysum((prev[i][t].mul(base[t][j], binary=binary) for t in range(m)), n)
                    nxt[j][i] = nxt[i][j]
            cache.append(nxt)
        return cache[k - 1]

    def trace_power(self, k: int, binary: bool = False) -> MultiPoly:
        """``tr(G^k)`` as a polynomial."""
        if k < 1:
            raise ValueError("k must be at least 1")
        Gk = self.power(k, binary=binary)
        return polysum((Gk[i][i] for i in range(self.m)), self.n)

    # JSON ---------------------------------------------------------------
    def to_json(self) -> dict:
        return {"m": self.m, "entries": [[p.to_json() for p in row] for row in self.upper()]}

    @classmethod
    def from_json(cls, data: Mapping) -> "SymPolyMatrix":
        try:
            m = int(data["m"])
            rows = [[MultiPoly.from_json(p) for p in row] for row in data["entries"]]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed matrix JSON: {exc}") from exc
        if len(rows) != m:
            raise ValueError(f"expected {m} rows, got {len(rows)}")
        if m == 1 or all(len(r) == m - i for i, r in enumerate(rows)):
            full = [[None] * m for _ in range(m)]
            for i, r in enumerate(rows):
                for off, p in enumerate(r):
                    full[i][i + off] = full[i + off][i] = p
            return cls(full)
        return cls(rows)


@dataclass(frozen=True)
class TraceBlocks:
    """Hankel trace blocks ``P`` (size ``v+1``) and ``Q`` (size ``v``)."""

    P: PolyGrid
    Q: PolyGrid
    v: int


# functional interface -------------------------------------------------------
def eval_matrix(G: SymPolyMatrix, x: Sequence[float]) -> np.ndarray:
    return G.eval(x)


def eigvals_sorted(G: SymPolyMatrix, x: Sequence[float]) -> np.ndarray:
    return G.eigvals_sorted(x)


def trace_power(G: SymPolyMatrix, k: int, binary: bool = False) -> MultiPoly:
    return G.trace_power(k, binary=binary)


def inner_h_G(h, G: SymPolyMatrix, binary: bool = False) -> MultiPoly:
    """``<h(G(x)), G(x)> = sum_j lambda_j h(lambda_j)`` as a polynomial.

    ``h`` is either a monomial-basis polynomial (attribute ``coefs``) or a
    Chebyshev series (attribute ``cheb_coefs``).  The Chebyshev branch
    runs the three-term recurrence ``T_{j+1}(G) = 2 G T_j(G) - T_{j-1}(G)``
    on polynomial matrices, which avoids forming ill-conditioned
    monomial coefficients of high-degree ``h``.
    """
    n, m = G.n, G.m
    if hasattr(h, "cheb_coefs"):
        c = np.asarray(h.cheb_coefs, dtype=float)
        base = G.reduce_binary().rows if binary else G.rows
        one = MultiPoly.constant(n, 1.0)
        zero = MultiPoly.zero(n)
        ident = [[one if i == j else zero for j in range(m)] for i in range(m)]

        def frob(A: PolyGrid) -> MultiPoly:
            return polysum((A[i][j].mul(base[i][j], binary=binary) for i in range(m) for j in range(m)), n)

        terms = []
        T_prev, T_cur = ident, [list(r) for r in base]
        if len(c) > 0:
            terms.append(frob(T_prev).scale(c[0]))
        for j in range(1, len(c)):
            terms.append(frob(T_cur).scale(c[j]))
            if j + 1 < len(c):
                T_next = [
                    [
                        polysum((base[i][t].mul(T_cur[t][s], binary=binary) for t in range(m)), n).scale(2.0)
                        - T_prev[i][s]
                        for s in range(m)
                    ]
                    for i in range(m)
                ]
                T_prev, T_cur = T_cur, T_next
        return polysum(terms, n)
    coefs = np.asarray(h.coefs, dtype=float)
    return polysum((G.trace_power(i + 1, binary=binary).scale(ci) for i, ci in enumerate(coefs) if ci != 0.0), n)


def trace_blocks(G: SymPolyMatrix, v: int, binary: bool = False) -> TraceBlocks:
    """Hankel blocks ``P_v`` and ``Q_{v-1}`` built from ``tr(G^k)``, ``k <= 2v+1``."""
    if v < 0:
        raise ValueError("v must be nonnegative")
    tr = {k: G.trace_power(k, binary=binary) for k in range(1, 2 * v + 2)}
    P = [[tr[i + j + 1] for j in range(v + 1)] for i in range(v + 1)]
    Q = [[tr[i + j + 1] - tr[i + j + 3] for j in range(v)] for i in range(v)]
    return TraceBlocks(P=P, Q=Q, v=v)


def normalization_scale(G: SymPolyMatrix, R: float = 1.0) -> float:
    """``sum_{i,j} ||g_ij||_1 * max(1, R^l)`` over all ``m^2`` positions."""
    if R <= 0:
        raise ValueError("R must be positive")
    total = math.fsum(G[i, j].coef_norm() for i in range(G.m) for j in range(G.m))
    return total * max(1.0, R**G.half_degree)


def normalize(G: SymPolyMatrix, domain: str = "ball", R: float = 1.0) -> tuple[SymPolyMatrix, float]:
    """Scale ``G`` so that its spectral radius is at most one on the domain.

    Parameters
    ----------
    G : SymPolyMatrix
        Constraint matrix.
    domain : {"binary", "ball"}
        Ambient set; both the unit ball and {0,1}^n lie in the box
        ``[-R, R]^n`` with ``R = 1``, where ``|x^alpha| <= 1``.
    R : float
        Box radius.

    Returns
    -------
    (SymPolyMatrix, float)
        ``G / scale`` and ``scale``; the zero matrix is returned unchanged
        with scale 1.
    """
    if domain not in ("binary", "ball"):
        raise ValueError(f"unknown domain {domain!r}")
    scale = normalization_scale(G, R)
    if scale == 0.0:
        return G, 1.0
    return G.scale(1.0 / scale), scale


def charpoly_coeffs(G: SymPolyMatrix, binary: bool = False) -> list[MultiPoly]:
    """Coefficients ``c_1..c_m`` with ``det(tI - G) = t^m + sum (-1)^i c_i t^{m-i}``.

    Faddeev-LeVerrier recurrence: ``M_1 = I``, ``a_k = -tr(G M_k)/k``,
    ``M_{k+1} = G M_k + a_k I``; then ``c_k = (-1)^k a_k`` is the k-th
    elementary symmetric function of the eigenvalues, so ``G(x) ⪰ 0``
    exactly when every ``c_k(x) >= 0``.
    """
    m, n = G.m, G.n
    if m > 6:
        raise ValueError("charpoly_coeffs supports m <= 6")
    base = G.reduce_binary().rows if binary else G.rows
    one = MultiPoly.constant(n, 1.0)
    zero = MultiPoly.zero(n)
    M = [[one if i == j else zero for j in range(m)] for i in range(m)]
    coeffs = []
    for k in range(1, m + 1):
        GM = [
            [polysum((base[i][t].mul(M[t][s], binary=binary) for t in range(m)), n) for s in range(m)]
            for i in range(m)
        ]
        a_k = polysum((GM[i][i] for i in range(m)), n).scale(-1.0 / k)
        coeffs.append(a_k.scale((-1.0) ** k))
        M = [[GM[i][s] + (a_k if i == s else zero) for s in range(m)] for i in range(m)]
    return coeffs
