"""Sparse multivariate polynomials, monomial bases and Riesz functionals.

Monomials are plain tuples of nonnegative integers (the multi-index
``alpha``).  Everything that has to be ordered uses the graded
lexicographic order: lower total degree first, and within a degree the
exponent tuples in decreasing lexicographic order, so that the degree-2
part of the basis in two variables reads ``x1^2, x1*x2, x2^2``.
"""

from __future__ import annotations

import math
from itertools import combinations_with_replacement
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

Monomial = tuple  # tuple[int, ...] of length n

#: Coefficients with absolute value at or below this are dropped.
PRUNE_TOL = 1e-14


def grlex_key(alpha: Monomial) -> tuple:
    """Sort key realising the graded lexicographic order."""
    return (sum(alpha), tuple(-a for a in alpha))


def monomial_degree(alpha: Monomial) -> int:
    return sum(alpha)


def add_exponents(a: Monomial, b: Monomial) -> Monomial:
    return tuple(i + j for i, j in zip(a, b))


def squarefree(alpha: Monomial) -> Monomial:
    """Square-free representative of ``x^alpha`` modulo ``x_i^2 = x_i``."""
    return tuple(1 if a else 0 for a in alpha)


def monomial_basis(n: int, r: int, squarefree: bool = False) -> list[Monomial]:
    """Monomials of degree at most ``r`` in graded lexicographic order.

    Parameters
    ----------
    n : int
        Number of variables, ``n >= 1``.
    r : int
        Maximal total degree, ``r >= 0``.
    squarefree : bool, optional
        Keep only multilinear monomials (the basis of the quotient ring
        used on the binary cube).

    Returns
    -------
    list of tuple
        ``C(n + r, n)`` exponent tuples, or ``sum_j C(n, j)`` for
        ``j <= r`` when ``squarefree`` is set.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if r < 0:
        raise ValueError("r must be nonnegative")
    basis: list[Monomial] = []
    for d in range(r + 1):
        for combo in combinations_with_replacement(range(n), d):
            if squarefree and len(set(combo)) < len(combo):
                continue
            alpha = [0] * n
            for i in combo:
                alpha[i] += 1
            basis.append(tuple(alpha))
    return basis


class MultiPoly:
    """Sparse real polynomial in ``n`` variables.

    Instances are treated as immutable.  Coefficients whose magnitude
    does not exceed :data:`PRUNE_TOL` are discarded on construction.

    Parameters
    ----------
    n : int
        Number of variables.
    terms : mapping, optional
        Map from exponent tuples of length ``n`` to coefficients.
    """

    __slots__ = ("n", "_terms")

    def __init__(self, n: int, terms: Mapping[Monomial, float] | None = None):
        if n < 1:
            raise ValueError("n must be at least 1")
        clean: dict[Monomial, float] = {}
        if terms:
            for alpha, c in terms.items():
                alpha = tuple(int(a) for a in alpha)
                if len(alpha) != n:
                    raise ValueError(f"exponent {alpha} does not have length {n}")
                if any(a < 0 for a in alpha):
                    raise ValueError(f"negative exponent in {alpha}")
                c = float(c)
                if abs(c) > PRUNE_TOL:
                    clean[alpha] = clean.get(alpha, 0.0) + c
            clean = {a: c for a, c in clean.items() if abs(c) > PRUNE_TOL}
        self.n = n
        self._terms = clean

    @classmethod
    def _raw(cls, n: int, terms: dict[Monomial, float]) -> "MultiPoly":
        # trusted constructor: terms already validated, only prune
        p = object.__new__(cls)
        p.n = n
        p._terms = {a: c for a, c in terms.items() if abs(c) > PRUNE_TOL}
        return p

    # constructors -------------------------------------------------------
    @classmethod
    def zero(cls, n: int) -> "MultiPoly":
        return cls(n)

    @classmethod
    def constant(cls, n: int, c: float) -> "MultiPoly":
        return cls(n, {(0,) * n: c})

    @classmethod
    def variable(cls, n: int, i: int) -> "MultiPoly":
        """The coordinate ``x_{i+1}`` (``i`` is zero based)."""
        if not 0 <= i < n:
            raise ValueError("variable index out of range")
        alpha = [0] * n
        alpha[i] = 1
        return cls(n, {tuple(alpha): 1.0})

    @classmethod
    def monomial(cls, alpha: Sequence[int], coef: float = 1.0) -> "MultiPoly":
        return cls(len(alpha), {tuple(alpha): coef})

    # basic queries ------------------------------------------------------
    @property
    def terms(self) -> Mapping[Monomial, float]:
        return MappingProxyType(self._terms)

    def items(self) -> list[tuple[Monomial, float]]:
        """Terms sorted in graded lexicographic order."""
        return sorted(self._terms.items(), key=lambda t: grlex_key(t[0]))

    def degree(self) -> int:
        """Total degree; the zero polynomial has degree 0 by convention."""
        return max((sum(a) for a in self._terms), default=0)

    def is_zero(self) -> bool:
        return not self._terms

    def coef(self, alpha: Sequence[int]) -> float:
        return self._terms.get(tuple(alpha), 0.0)

    def constant_term(self) -> float:
        return self._terms.get((0,) * self.n, 0.0)

    def coef_norm(self) -> float:
        """Sum of absolute values of the coefficients."""
        return math.fsum(abs(c) for c in self._terms.values())

    def __len__(self) -> int:
        return len(self._terms)

    def __repr__(self) -> str:
        if not self._terms:
            return f"MultiPoly(n={self.n}, 0)"
        parts = []
        for alpha, c in self.items():
            mono = "*".join(
                f"x{i + 1}" if a == 1 else f"x{i + 1}^{a}" for i, a in enumerate(alpha) if a
            )
            parts.append(f"{c:+.6g}" + (f"*{mono}" if mono else ""))
        return f"MultiPoly(n={self.n}, {' '.join(parts)})"

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, float)):
            other = MultiPoly.constant(self.n, float(other))
        if not isinstance(other, MultiPoly):
            return NotImplemented
        return self.n == other.n and self._terms == other._terms

    __hash__ = None  # mutable-looking container semantics; compare by value

    def allclose(self, other: "MultiPoly", tol: float = 1e-10) -> bool:
        """Coefficientwise comparison with absolute tolerance ``tol``."""
        return (self - other).max_abs_coef() <= tol

    def max_abs_coef(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    # arithmetic ---------------------------------------------------------
    def _check(self, other: "MultiPoly") -> None:
        if self.n != other.n:
            raise ValueError(f"dimension mismatch: {self.n} vs {other.n}")

    def _coerce(self, other) -> "MultiPoly":
        if isinstance(other, MultiPoly):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.integer, np.floating)):
            return MultiPoly.constant(self.n, float(other))
        return NotImplemented

    def __add__(self, other) -> "MultiPoly":
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for a, c in other._terms.items():
            out[a] = out.get(a, 0.0) + c
        return MultiPoly._raw(self.n, out)

    __radd__ = __add__

    def __neg__(self) -> "MultiPoly":
        return MultiPoly._raw(self.n, {a: -c for a, c in self._terms.items()})

    def __sub__(self, other) -> "MultiPoly":
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other) -> "MultiPoly":
        return (-self) + other

    def scale(self, s: float) -> "MultiPoly":
        s = float(s)
        return MultiPoly._raw(self.n, {a: s * c for a, c in self._terms.items()})

    def __truediv__(self, s: float) -> "MultiPoly":
        return self.scale(1.0 / float(s))

    def mul(self, other: "MultiPoly", binary: bool = False) -> "MultiPoly":
        """Product, optionally reduced modulo ``x_i^2 = x_i`` on the fly."""
        self._check(other)
        out: dict[Monomial, float] = {}
        if binary:
            for a, ca in self._terms.items():
                for b, cb in other._terms.items():
                    e = tuple(1 if (i or j) else 0 for i, j in zip(a, b))
                    out[e] = out.get(e, 0.0) + ca * cb
        else:
            for a, ca in self._terms.items():
                for b, cb in other._terms.items():
                    e = tuple(i + j for i, j in zip(a, b))
                    out[e] = out.get(e, 0.0) + ca * cb
        return MultiPoly._raw(self.n, out)

    def __mul__(self, other) -> "MultiPoly":
        if isinstance(other, MultiPoly):
            return self.mul(other)
        if isinstance(other, (int, float, np.integer, np.floating)):
            return self.scale(other)
        return NotImplemented

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "MultiPoly":
        if k < 0:
            raise ValueError("negative power")
        out = MultiPoly.constant(self.n, 1.0)
        for _ in range(k):
            out = out * self
        return out

    # transformations ----------------------------------------------------
    def reduce_binary(self) -> "MultiPoly":
        """Multilinear representative agreeing with ``self`` on {0,1}^n."""
        out: dict[Monomial, float] = {}
        for a, c in self._terms.items():
            e = squarefree(a)
            out[e] = out.get(e, 0.0) + c
        return MultiPoly._raw(self.n, out)

    def is_squarefree(self) -> bool:
        return all(max(a, default=0) <= 1 for a in self._terms)

    def derivative(self, i: int) -> "MultiPoly":
        """Partial derivative with respect to ``x_{i+1}``."""
        out: dict[Monomial, float] = {}
        for a, c in self._terms.items():
            if a[i]:
                e = list(a)
                e[i] -= 1
                e = tuple(e)
                out[e] = out.get(e, 0.0) + c * a[i]
        return MultiPoly._raw(self.n, out)

    def gradient(self) -> list["MultiPoly"]:
        return [self.derivative(i) for i in range(self.n)]

    # evaluation ---------------------------------------------------------
    def eval(self, x: Sequence[float]) -> float:
        """Value at ``x``; terms summed with ``math.fsum`` in graded-lex order."""
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.n:
            raise ValueError(f"point has length {x.shape[0]}, expected {self.n}")
        vals = []
        for alpha, c in self.items():
            t = c
            for xi, a in zip(x, alpha):
                if a:
                    t *= xi**a
            vals.append(t)
        return math.fsum(vals)

    __call__ = eval

    def eval_many(self, X: np.ndarray) -> np.ndarray:
        """Vectorised evaluation at the rows of ``X`` (shape ``(N, n)``)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n:
            raise ValueError(f"points have dimension {X.shape[1]}, expected {self.n}")
        out = np.zeros(X.shape[0])
        if not self._terms:
            return out
        d = self.degree()
        powers = [[np.ones(X.shape[0])] for _ in range(self.n)]
        for i in range(self.n):
            for _ in range(d):
                powers[i].append(powers[i][-1] * X[:, i])
        for alpha, c in self.items():
            t = np.full(X.shape[0], c)
            for i, a in enumerate(alpha):
                if a:
                    t = t * powers[i][a]
            out += t
        return out

    # serialisation ------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "n": self.n,
            "terms": [{"exp": list(a), "coef": c} for a, c in self.items()],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "MultiPoly":
        try:
            n = int(data["n"])
            terms: dict[Monomial, float] = {}
            for t in data["terms"]:
                alpha = tuple(int(a) for a in t["exp"])
                terms[alpha] = terms.get(alpha, 0.0) + float(t["coef"])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed polynomial JSON: {exc}") from exc
        return cls(n, terms)


# functional interface -------------------------------------------------------
def eval(p: MultiPoly, x: Sequence[float]) -> float:  # noqa: A001 - mirrors the op name
    return p.eval(x)


def coef_norm(p: MultiPoly) -> float:
    return p.coef_norm()


def arith(p: MultiPoly, q, kind: str) -> MultiPoly:
    """Ring operation selected by ``kind`` in {"add", "sub", "mul", "scale"}."""
    if kind == "add":
        return p + q
    if kind == "sub":
        return p - q
    if kind == "mul":
        return p * q
    if kind == "scale":
        return p.scale(q)
    raise ValueError(f"unknown operation {kind!r}")


def reduce_binary(p: MultiPoly) -> MultiPoly:
    return p.reduce_binary()


def polysum(polys: Iterable[MultiPoly], n: int) -> MultiPoly:
    out: dict[Monomial, float] = {}
    for p in polys:
        for a, c in p._terms.items():
            out[a] = out.get(a, 0.0) + c
    return MultiPoly._raw(n, out)


class MomentVector:
    """Truncated moment sequence ``y = (y_alpha)``.

    Parameters
    ----------
    n : int
        Number of variables.
    order : int
        Maximal degree ``2r`` of the indexed monomials.
    values : mapping
        Map from exponent tuples to reals.
    """

    __slots__ = ("n", "order", "values")

    def __init__(self, n: int, order: int, values: Mapping[Monomial, float]):
        self.n = n
        self.order = order
        self.values = MappingProxyType({tuple(a): float(v) for a, v in values.items()})

    @classmethod
    def point_mass(
        cls, x: Sequence[float], order: int, squarefree: bool = False
    ) -> "MomentVector":
        """Moments of the Dirac measure at ``x`` up to degree ``order``."""
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        vals = {}
        for alpha in monomial_basis(n, order, squarefree=squarefree):
            vals[alpha] = float(np.prod(x ** np.array(alpha)))
        return cls(n, order, vals)

    def __getitem__(self, alpha: Sequence[int]) -> float:
        return self.values[tuple(alpha)]

    def riesz(self, p: MultiPoly) -> float:
        return riesz(p, self)


def riesz(p: MultiPoly, y: MomentVector) -> float:
    """Riesz functional ``L_y(p) = sum_alpha p_alpha y_alpha``."""
    if p.n != y.n:
        raise ValueError("dimension mismatch")
    if p.degree() > y.order:
        raise ValueError(f"degree {p.degree()} exceeds moment order {y.order}")
    vals = []
    for alpha, c in p.items():
        if alpha not in y.values:
            raise ValueError(f"moment y_{alpha} not available")
        vals.append(c * y.values[alpha])
    return math.fsum(vals)
