"""Univariate penalty construction.

The pipeline glues a smooth step out of the plateaus 0 on ``[0, 1]`` and
``N`` on ``[-1, lambda]``::

    q_k(lambda, N)(t) = 0                 for t in [0, 1]
                      = N                 for t in [-1, lambda]
                      = N c_k(t / lambda) for t in [lambda, 0]

with the concatenation polynomial ``c_k(t) = t + (2t - 1) T_k(t(1 - t))``
where ``T_k`` is the degree-``k`` Taylor polynomial of
``phi(u) = (1 - 4u)^(-1/2) / 2 - 1/2``.  The step is approximated by its
degree-``v`` Chebyshev interpolant and shifted upwards so that the
resulting polynomial ``p`` dominates ``q`` on ``[-1, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from numpy.polynomial import polynomial as nppoly

#: Rate constant ``a = exp(-1 / (2e + 1))``.
A_CONST = math.exp(-1.0 / (2.0 * math.e + 1.0))

#: Above this degree the monomial form of a Chebyshev series is not used.
MONOMIAL_DEGREE_LIMIT = 60

GRID_POINTS = 10_000
GRID_SLACK = 1e-10


class PenaltyVerificationError(RuntimeError):
    """The shifted approximant fails to dominate the step on the grid."""


class UniPoly:
    """Univariate polynomial in the monomial basis (coefficients low to high)."""

    __slots__ = ("coefs",)

    def __init__(self, coefs):
        c = np.atleast_1d(np.asarray(coefs, dtype=float)).copy()
        nz = np.flatnonzero(c)
        c = c[: nz[-1] + 1] if nz.size else np.zeros(1)
        c.setflags(write=False)
        self.coefs = c

    @property
    def degree(self) -> int:
        return len(self.coefs) - 1

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t) + self.coefs[-1]
        for c in self.coefs[-2::-1]:
            out = out * t + c
        return out if out.ndim else float(out)

    def deriv(self, m: int = 1) -> "UniPoly":
        return UniPoly(nppoly.polyder(self.coefs, m)) if self.degree >= m else UniPoly([0.0])

    def __add__(self, other) -> "UniPoly":
        other = other if isinstance(other, UniPoly) else UniPoly([other])
        return UniPoly(nppoly.polyadd(self.coefs, other.coefs))

    __radd__ = __add__

    def __sub__(self, other) -> "UniPoly":
        other = other if isinstance(other, UniPoly) else UniPoly([other])
        return UniPoly(nppoly.polysub(self.coefs, other.coefs))

    def __mul__(self, other) -> "UniPoly":
        if isinstance(other, UniPoly):
            return UniPoly(nppoly.polymul(self.coefs, other.coefs))
        return UniPoly(self.coefs * float(other))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"UniPoly({np.array2string(self.coefs, precision=6)})"


class ChebPoly:
    """Chebyshev series ``sum_j c_j T_j(t)`` on ``[-1, 1]``."""

    __slots__ = ("cheb_coefs",)

    def __init__(self, cheb_coefs):
        c = np.atleast_1d(np.asarray(cheb_coefs, dtype=float)).copy()
        c.setflags(write=False)
        self.cheb_coefs = c

    @property
    def degree(self) -> int:
        return len(self.cheb_coefs) - 1

    def __call__(self, t):
        """Clenshaw recurrence."""
        t = np.asarray(t, dtype=float)
        c = self.cheb_coefs
        b1 = np.zeros_like(t)
        b2 = np.zeros_like(t)
        for cj in c[:0:-1]:
            b1, b2 = 2.0 * t * b1 - b2 + cj, b1
        out = t * b1 - b2 + c[0]
        return out if out.ndim else float(out)

    def add_constant(self, s: float) -> "ChebPoly":
        c = np.array(self.cheb_coefs)
        c[0] += s
        return ChebPoly(c)

    def to_unipoly(self) -> UniPoly:
        """Exact change of basis (ill-conditioned for large degree)."""
        return UniPoly(npcheb.cheb2poly(self.cheb_coefs))


@dataclass(frozen=True)
class PenaltySpec:
    """Parameters of the smooth step ``q_k(lambda, N)`` and its approximant.

    Parameters
    ----------
    lam : float
        Breakpoint in ``[-1, 0)``.
    N : float
        Plateau height, positive.
    k : int
        Smoothness order, ``k >= 0``.
    v : int
        Approximation degree, ``v > k``.
    """

    lam: float
    N: float
    k: int
    v: int

    def __post_init__(self):
        if not (-1.0 <= self.lam < 0.0):
            raise ValueError("lambda must lie in [-1, 0)")
        if not self.N > 0:
            raise ValueError("N must be positive")
        if self.k < 0:
            raise ValueError("k must be nonnegative")
        if self.v <= self.k:
            raise ValueError("v must exceed k")

    def to_json(self) -> dict:
        return {"lambda": self.lam, "N": self.N, "k": self.k, "v": self.v}


def phi_taylor_coeffs(k: int) -> np.ndarray:
    """Taylor coefficients ``a_0..a_k`` of ``phi(u) = (1-4u)^(-1/2)/2 - 1/2`` at 0."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    a = np.zeros(k + 1)
    if k >= 1:
        a[1] = 1.0
        for i in range(1, k):
            a[i + 1] = a[i] * 4.0 * (i + 0.5) / (i + 1)
    return a


def _phi_taylor_exact(k: int) -> list[Fraction]:
    a = [Fraction(0)] * (k + 1)
    if k >= 1:
        a[1] = Fraction(1)
        for i in range(1, k):
            a[i + 1] = a[i] * Fraction(4 * i + 2, i + 1)
    return a


def concat_poly(k: int) -> UniPoly:
    """Concatenation polynomial ``c_k(t) = t + (2t - 1) T_k(t(1 - t))``.

    The expansion is carried out in exact rational arithmetic before the
    conversion to floats, so the symmetry ``c_k(t) + c_k(1-t) = 1`` and the
    flatness conditions at 0 and 1 hold up to a single rounding.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    a = _phi_taylor_exact(k)
    u = [Fraction(0), Fraction(1), Fraction(-1)]  # t - t^2

    def mul(p, q):
        out = [Fraction(0)] * (len(p) + len(q) - 1)
        for i, pi in enumerate(p):
            if pi:
                for j, qj in enumerate(q):
                    out[i + j] += pi * qj
        return out

    T = [Fraction(0)]
    u_pow = [Fraction(1)]
    for i in range(1, k + 1):
        u_pow = mul(u_pow, u)
        T = T + [Fraction(0)] * (len(u_pow) - len(T))
        for j, c in enumerate(u_pow):
            T[j] += a[i] * c
    c = mul([Fraction(-1), Fraction(2)], T)
    c = c + [Fraction(0)] * max(0, 2 - len(c))
    c[1] += 1
    return UniPoly([float(x) for x in c])


def q_eval(spec: PenaltySpec, t):
    """Evaluate the smooth step ``q_k(lambda, N)`` (vectorised)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(np.abs(t_arr) > 1.0):
        raise ValueError("t must lie in [-1, 1]")
    c = concat_poly(spec.k)
    out = np.where(t_arr <= spec.lam, spec.N, 0.0)
    ramp = (t_arr > spec.lam) & (t_arr < 0.0)
    if np.any(ramp):
        out = np.where(ramp, spec.N * c(np.where(ramp, t_arr / spec.lam, 0.0)), out)
    return out if out.ndim else float(out)


def choose_k(delta: float, v: int) -> int:
    """``max{0, floor((delta v - 2e) / (2e + delta))}``."""
    if not (0.0 < delta <= 1.0):
        raise ValueError("delta must lie in (0, 1]")
    if v < 1:
        raise ValueError("v must be at least 1")
    return max(0, math.floor((delta * v - 2.0 * math.e) / (2.0 * math.e + delta)))


def total_variation_bound(spec: PenaltySpec) -> float:
    """Bound ``3 N |lambda|^-k 4^k k! k`` on the variation of ``q^(k)``; inf for k = 0."""
    k = spec.k
    if k == 0:
        return math.inf
    return 3.0 * spec.N * abs(spec.lam) ** (-k) * 4.0**k * math.factorial(k) * k


def theoretical_shift(spec: PenaltySpec) -> float:
    """``4 N |lambda|^-k 4^k k! / (v - k)^k``."""
    k = spec.k
    return 4.0 * spec.N * abs(spec.lam) ** (-k) * 4.0**k * math.factorial(k) / (spec.v - k) ** k


def jackson_error_bound(spec: PenaltySpec) -> float:
    """Envelope ``8 N e^2 a^{|lambda| v}`` on ``p - q``."""
    return 8.0 * spec.N * math.e**2 * A_CONST ** (abs(spec.lam) * spec.v)


def chebyshev_nodes(v: int) -> np.ndarray:
    """Second-kind points ``cos(j pi / v)``, ``j = 0..v``."""
    return np.cos(np.pi * np.arange(v + 1) / v)


def cheb_fit(spec: PenaltySpec) -> ChebPoly:
    """Degree-``v`` interpolant of ``q`` at the second-kind Chebyshev points.

    Coefficients come from the direct O(v^2) interpolation sums
    ``c_i = (2/v) sum''_j q(x_j) cos(i j pi / v)`` (first and last terms
    halved, and ``c_0``, ``c_v`` halved).
    """
    v = spec.v
    if v <= spec.k:
        raise ValueError("v must exceed k")
    x = chebyshev_nodes(v)
    fx = np.asarray(q_eval(spec, np.clip(x, -1.0, 1.0)), dtype=float)
    w = np.ones(v + 1)
    w[0] = w[-1] = 0.5
    j = np.arange(v + 1)
    C = np.cos(np.pi * np.outer(j, j) / v)
    c = (2.0 / v) * (C @ (w * fx))
    c[0] *= 0.5
    c[-1] *= 0.5
    return ChebPoly(c)


def verification_grid(spec: PenaltySpec) -> np.ndarray:
    """Equispaced grid of ``[-1, 1]`` plus the breakpoints and interpolation nodes."""
    pts = np.concatenate(
        [np.linspace(-1.0, 1.0, GRID_POINTS), [spec.lam, 0.0], chebyshev_nodes(spec.v)]
    )
    return np.unique(np.clip(pts, -1.0, 1.0))


@dataclass(frozen=True)
class PenaltyPoly:
    """Shifted Chebyshev approximant ``p = interp(q) + shift``.

    Attributes
    ----------
    spec : PenaltySpec
    cheb : ChebPoly
        ``p`` in the Chebyshev basis (shift included).
    shift : float
    bound : float
        The envelope ``8 N e^2 a^{|lambda| v}``.
    grid_sup_error : float
        ``max |interp(q) - q|`` on the verification grid.
    mode : str
        ``"theoretical"`` or ``"empirical"``; ``k = 0`` always uses the latter.
    """

    spec: PenaltySpec
    cheb: ChebPoly
    shift: float
    bound: float
    grid_sup_error: float
    mode: str
    requested_mode: str = field(default="theoretical")

    def __call__(self, t):
        return self.cheb(t)

    @property
    def poly(self) -> UniPoly:
        """Monomial form; accurate only for moderate degree (see ``MONOMIAL_DEGREE_LIMIT``)."""
        return self.cheb.to_unipoly()

    @property
    def h(self):
        """Representation suited to symbolic use in ``inner_h_G``."""
        return self.poly if self.spec.v <= MONOMIAL_DEGREE_LIMIT else self.cheb

    def to_json(self) -> dict:
        return {
            "spec": self.spec.to_json(),
            "shift": self.shift,
            "shift_mode": self.mode,
            "requested_shift_mode": self.requested_mode,
            "grid_sup_error": self.grid_sup_error,
            "jackson_bound": self.bound,
            "theoretical_shift": theoretical_shift(self.spec),
        }


def penalty_poly(spec: PenaltySpec, mode: str = "theoretical") -> PenaltyPoly:
    """One-sided polynomial approximation of the smooth step from above.

    Parameters
    ----------
    spec : PenaltySpec
    mode : {"theoretical", "empirical"}
        Theoretical mode adds ``4 N |lambda|^-k 4^k k! / (v-k)^k``; empirical
        mode adds ``1.05`` times the measured grid error.  With ``k = 0``
        the Jackson bound is unavailable and empirical mode is used.

    Returns
    -------
    PenaltyPoly

    Raises
    ------
    PenaltyVerificationError
        If ``p - q < -1e-10`` somewhere on the verification grid.
    """
    if mode not in ("theoretical", "empirical"):
        raise ValueError(f"unknown shift mode {mode!r}")
    interp = cheb_fit(spec)
    grid = verification_grid(spec)
    qg = q_eval(spec, grid)
    err = float(np.max(np.abs(interp(grid) - qg)))
    used = mode if spec.k >= 1 else "empirical"
    shift = theoretical_shift(spec) if used == "theoretical" else 1.05 * err
    p = interp.add_constant(shift)
    gap = p(grid) - qg
    if np.min(gap) < -GRID_SLACK:
        raise PenaltyVerificationError(
            f"p - q reaches {np.min(gap):.3e} on the grid; v={spec.v} too small for k={spec.k}"
        )
    return PenaltyPoly(
        spec=spec,
        cheb=p,
        shift=shift,
        bound=jackson_error_bound(spec),
        grid_sup_error=err,
        mode=used,
        requested_mode=mode,
    )


def fml_decompose(h: UniPoly, tol: float = 1e-9):
    """Write ``h >= 0`` on ``[-1, 1]`` as ``h1 + (1 - t^2) h2`` with SOS ``h1, h2``.

    A small SDP finds Gram matrices ``H1`` (size ``s+1``) and ``H2``
    (size ``s``), ``s = ceil(deg h / 2)``, with
    ``h = b_s^T H1 b_s + (1 - t^2) b_{s-1}^T H2 b_{s-1}``.

    Returns
    -------
    h1, h2 : UniPoly
    H1, H2 : ndarray
        Gram matrices after eigenvalue clipping.

    Raises
    ------
    ValueError
        If ``h`` is negative on the grid or no certificate is found.
    """
    from .sdp import PSDBlock, EqualityBlock, SDPProblem, solve

    grid = np.linspace(-1.0, 1.0, GRID_POINTS)
    if np.min(h(grid)) < -1e-9:
        raise ValueError("h is negative on [-1, 1]")
    D = h.degree
    s = (D + 1) // 2
    names, idx1, idx2 = [], {}, {}
    for i in range(s + 1):
        for j in range(i, s + 1):
            idx1[i, j] = len(names)
            names.append(f"H1[{i},{j}]")
    for i in range(s):
        for j in range(i, s):
            idx2[i, j] = len(names)
            names.append(f"H2[{i},{j}]")
    B1 = PSDBlock("H1", s + 1, {idx1[i, j] + 1: {(i, j): 1.0} for (i, j) in idx1})
    blocks = [B1]
    if s > 0:
        blocks.append(PSDBlock("H2", s, {idx2[i, j] + 1: {(i, j): 1.0} for (i, j) in idx2}))
    hc = np.zeros(2 * s + 1)
    hc[: D + 1] = h.coefs
    rows = []
    for d in range(2 * s + 1):
        row: dict[int, float] = {0: -hc[d]}
        for (i, j), var in idx1.items():
            if i + j == d:
                row[var + 1] = row.get(var + 1, 0.0) + (1.0 if i == j else 2.0)
        for (i, j), var in idx2.items():
            mult = 1.0 if i == j else 2.0
            if i + j == d:
                row[var + 1] = row.get(var + 1, 0.0) + mult
            if i + j + 2 == d:
                row[var + 1] = row.get(var + 1, 0.0) - mult
        rows.append(row)
    # minimise the total trace to pick a low-rank certificate when several exist
    objective = {idx1[i, i] + 1: 1.0 for i in range(s + 1)}
    objective.update({idx2[i, i] + 1: 1.0 for i in range(s)})
    prob = SDPProblem(
        var_names=tuple(names),
        objective=objective,
        sense="min",
        psd_blocks=tuple(blocks),
        equality_blocks=(EqualityBlock("coef", tuple(rows)),),
    )
    sol = solve(prob, tol=tol)
    if sol.status not in ("optimal", "near_optimal"):
        raise ValueError(f"no FML certificate found (solver status {sol.status})")
    x = sol.x

    def gram(size, idx):
        M = np.zeros((size, size))
        for (i, j), var in idx.items():
            M[i, j] = M[j, i] = x[var]
        w, V = np.linalg.eigh(M)
        return (V * np.clip(w, 0.0, None)) @ V.T

    H1 = gram(s + 1, idx1)
    H2 = gram(s, idx2)

    def hankel_poly(M):
        c = np.zeros(2 * M.shape[0] - 1 if M.size else 1)
        for i in range(M.shape[0]):
            for j in range(M.shape[0]):
                c[i + j] += M[i, j]
        return UniPoly(c)

    h1 = hankel_poly(H1)
    h2 = hankel_poly(H2) if s > 0 else UniPoly([0.0])
    recon = h1 + UniPoly([1.0, 0.0, -1.0]) * h2
    resid = np.max(np.abs(nppoly.polysub(recon.coefs, h.coefs)))
    if resid > 1e-7:
        raise ValueError(f"FML reconstruction residual {resid:.2e} exceeds 1e-7")
    return h1, h2, H1, H2


def penalized_objective(f, G, pen: PenaltyPoly, binary: bool = False):
    """``F = f - <p(G), G>``, the objective with the matrix constraint folded in."""
    from .matpoly import inner_h_G

    return f - inner_h_G(pen.h, G, binary=binary)
