"""Ground truth and diagnostics.

Brute-force minima over the hypercube, sampled upper bounds over the unit
ball, Krawtchouk least roots, hypothesis checks and the closed-form rate
bounds.  None of these feed into a relaxation; they exist to check one.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .matpoly import SymPolyMatrix, charpoly_coeffs
from .penalty import A_CONST
from .poly import MultiPoly

#: Feasibility tolerance on ``lambda_min(G(x))``; tighter than any solver tolerance.
FEAS_TOL = 1e-10
MAX_ENUM_VARS = 22
_CHUNK = 1 << 15


class OracleError(ValueError):
    """Raised when an oracle cannot produce a minimum."""


@dataclass
class OracleResult:
    """Minimum of ``f`` over the feasible set as seen by an oracle.

    ``exact`` is True for enumeration and False for sampling, in which case
    ``f_min`` is only an upper bound on the true minimum.
    """

    f_min: float
    argmin: tuple
    lambda_gap: float | None
    feasible_count: int
    exact: bool = True
    samples: int | None = None

    def to_json(self) -> dict:
        d = asdict(self)
        d["argmin"] = [float(v) for v in self.argmin]
        d["kind"] = "exact" if self.exact else "upper_bound"
        return d


def _min_eigs(G: SymPolyMatrix, X: np.ndarray) -> np.ndarray:
    if G.m == 1:
        return G[0, 0].eval_many(X)
    return np.linalg.eigvalsh(G.eval_many(X))[:, 0]


def _cube_chunk(n: int, start: int, stop: int) -> np.ndarray:
    # bit n-1-i of the index is coordinate i, so rows follow lexicographic order
    idx = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(float)


def brute_force_binary(f: MultiPoly, G: SymPolyMatrix | None, tol: float = FEAS_TOL) -> OracleResult:
    """Enumerate ``{0,1}^n`` and minimise ``f`` over ``{x : G(x) ⪰ 0}``.

    The argmin is the lexicographically smallest minimiser.  ``lambda_gap``
    is the largest ``lambda_min(G(x))`` over infeasible cube points, or
    ``None`` when every point is feasible.
    """
    n = f.n
    if G is not None and G.n != n:
        raise ValueError("f and G have different numbers of variables")
    if n > MAX_ENUM_VARS:
        raise OracleError(f"enumeration limited to n <= {MAX_ENUM_VARS}, got {n}")
    best_val = math.inf
    best_x = None
    gap = -math.inf
    count = 0
    total = 1 << n
    for start in range(0, total, _CHUNK):
        X = _cube_chunk(n, start, min(total, start + _CHUNK))
        if G is None:
            feas = np.ones(X.shape[0], dtype=bool)
        else:
            lam = _min_eigs(G, X)
            feas = lam >= -tol
            if (~feas).any():
                gap = max(gap, float(lam[~feas].max()))
        count += int(feas.sum())
        if not feas.any():
            continue
        vals = np.where(feas, f.eval_many(X), np.inf)
        i = int(np.argmin(vals))  # first occurrence, hence lexicographic
        if vals[i] < best_val:
            best_val, best_x = float(vals[i]), X[i]
    if best_x is None:
        raise OracleError("feasible set is empty")
    return OracleResult(
        f_min=float(f.eval(best_x)),
        argmin=tuple(int(v) for v in best_x),
        lambda_gap=None if gap == -math.inf else gap,
        feasible_count=count,
    )


def uniform_ball(N: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``N`` points uniformly distributed in the closed unit ball of R^n."""
    Z = rng.standard_normal((N, n))
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    radii = rng.random((N, 1)) ** (1.0 / n)
    return Z / norms * radii


def _ball_feasible(G: SymPolyMatrix | None, x: np.ndarray, tol: float) -> bool:
    if float(x @ x) > 1.0:
        return False
    return G is None or float(_min_eigs(G, x[None, :])[0]) >= -tol


def sample_min_ball(
    f: MultiPoly,
    G: SymPolyMatrix | None,
    samples: int = 100_000,
    seed: int = 0,
    tol: float = FEAS_TOL,
    polish_iters: int = 100,
) -> OracleResult:
    """Upper bound on ``min f`` over ``{x in B^n : G(x) ⪰ 0}``.

    Rejection sampling followed by ``polish_iters`` sweeps of a
    derivative-free coordinate search that never leaves the feasible set.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    n = f.n
    rng = np.random.default_rng(seed)
    best_val, best_x, count = math.inf, None, 0
    for start in range(0, samples, _CHUNK):
        X = uniform_ball(min(_CHUNK, samples - start), n, rng)
        feas = np.ones(X.shape[0], dtype=bool) if G is None else _min_eigs(G, X) >= -tol
        count += int(feas.sum())
        if not feas.any():
            continue
        vals = np.where(feas, f.eval_many(X), np.inf)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_x = float(vals[i]), X[i].copy()
    if best_x is None:
        raise OracleError("no feasible sample found")

    x, fx, step = best_x, best_val, 0.1
    for _ in range(polish_iters):
        improved = False
        for i in range(n):
            for sgn in (1.0, -1.0):
                cand = x.copy()
                cand[i] += sgn * step
                if not _ball_feasible(G, cand, tol):
                    continue
                fc = f.eval(cand)
                if fc < fx:
                    x, fx, improved = cand, fc, True
        if not improved:
            step *= 0.5
    return OracleResult(
        f_min=float(fx),
        argmin=tuple(float(v) for v in x),
        lambda_gap=None,
        feasible_count=count,
        exact=False,
        samples=samples,
    )


def krawtchouk_least_root(r: int, n: int) -> float:
    """Least root ``xi_r^n`` of the degree-``r`` binary Krawtchouk polynomial.

    Convention ``K_1(x) = n - 2x``.  The monic recurrence
    ``x P_j = P_{j+1} + (n/2) P_j + j (n - j + 1)/4 P_{j-1}`` gives a
    symmetric tridiagonal Jacobi matrix whose smallest eigenvalue is the
    least root.
    """
    if not (1 <= r <= n):
        raise ValueError(f"need 1 <= r <= n, got r={r}, n={n}")
    if r == 1:
        return n / 2.0
    j = np.arange(1, r, dtype=float)
    off = np.sqrt(j * (n - j + 1) / 4.0)
    diag = np.full(r, n / 2.0)
    return float(eigvalsh_tridiagonal(diag, off, select="i", select_range=(0, 0))[0])


def _check(lhs: float, rhs: float, le: bool = True) -> dict:
    ok = lhs <= rhs if le else lhs >= rhs
    return {"ok": bool(ok), "lhs": lhs, "rhs": rhs, "slack": (rhs - lhs) if le else (lhs - rhs)}


def check_hypotheses(kind: str, params: Mapping) -> dict:
    """Advisory check of the convergence-rate hypotheses.

    ``params`` holds ``n, d, l, r, v`` (and optionally ``m``).  Returns a
    mapping from hypothesis name to ``{"ok", "lhs", "rhs", "slack"}``.
    A ``None`` lhs means the quantity is undefined and the check fails.
    """
    n, d, l, r, v = (int(params[k]) for k in ("n", "d", "l", "r", "v"))
    deg_F = max(d, 2 * l * (v + 1))
    if kind == "binary":
        out = {"r_over_n": _check((r + 1) / n, 0.5)}
        xi = krawtchouk_least_root(r + 1, n) if r + 1 <= n else None
        if xi is None:
            out["xi_degree_f"] = {"ok": False, "lhs": None, "rhs": 0.5, "slack": None}
            out["xi_degree_penalty"] = {"ok": False, "lhs": None, "rhs": 0.5, "slack": None}
        else:
            out["xi_degree_f"] = _check(d * (d + 1) * xi, 0.5)
            D = 2 * l * (v + 1)
            out["xi_degree_penalty"] = _check(D * (D + 1) * xi, 0.5)
        out["penalty_degree"] = _check(l * (v + 1), r)
        return out
    if kind == "ball":
        return {"r_large": _check(r, 2 * n * deg_F, le=False)}
    raise ValueError(f"unknown kind {kind!r}")


def _gamma_ball(n: int, d: int) -> float | None:
    if n < 2:
        return None
    best = max((1.0 + 2.0 * k / (n - 1)) * math.comb(k + n - 2, n - 2) for k in range(d + 1))
    return math.sqrt(best)


def ball_constant(n: int, d: int) -> float | None:
    """``C_B(n, d) = 2 (n+1)^2 d^2 gamma_d`` for the unit ball; None when n = 1."""
    g = _gamma_ball(n, d)
    return None if g is None else 2.0 * (n + 1) ** 2 * d**2 * g


def v_envelope(f_norm: float, m: int, v: int, lam: float) -> float:
    """``V(m, v, lambda) = ||f|| 16 m e^2 |lambda|^-1 a^{|lambda| v}``."""
    return f_norm * 16.0 * m * math.e**2 / abs(lam) * A_CONST ** (abs(lam) * v)


def u_envelope(f_norm: float, m: int, v: int, delta: float) -> float:
    """``U(m, v, delta) = ||f|| 16 e^2 m delta^-1 a^{delta v}``."""
    return f_norm * 16.0 * math.e**2 * m / delta * A_CONST ** (delta * v)


@dataclass
class RateDiagnostics:
    """Evaluated rate-bound quantities.  Reported, never asserted tight."""

    kind: str
    a_const: float = A_CONST
    xi: float | None = None
    Cd_note: str = "C_d symbolic: the binary bound is C_d * xi * (coefficient); C_d is not known explicitly"
    V_bound: float | None = None
    binary_coefficient: float | None = None
    U_bound: float | None = None
    CB: float | None = None
    ball_rhs: float | None = None
    L_f: float | None = None
    C_loj: float = 1.0
    L_loj: float = 1.0
    E_f: float | None = None
    d_prime: int | None = None
    b: float | None = None
    gamma: float | None = None
    v_choice: int | None = None
    delta_choice: float | None = None
    degree_threshold: float | None = None
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


def rate_bounds(kind: str, params: Mapping) -> RateDiagnostics:
    """Evaluate the closed-form bounds for a binary or ball instance.

    Required keys: ``n, m, d, l, r, v, f_norm``; ``lam`` (binary) or
    ``delta`` (ball).  Optional: ``L_f``, ``C_loj``, ``L_loj``, ``E_f``,
    ``rho``.  Missing Łojasiewicz data defaults to ``C = L = 1`` and the
    provenance record says so.
    """
    n, m, d, l, r, v = (int(params[k]) for k in ("n", "m", "d", "l", "r", "v"))
    fn = float(params["f_norm"])
    prov = {}
    for key, default in (("C_loj", 1.0), ("L_loj", 1.0), ("rho", 1.0)):
        prov[key] = "user" if params.get(key) is not None else f"default={default}"
    C = float(params.get("C_loj") or 1.0)
    L = float(params.get("L_loj") or 1.0)
    rho = float(params.get("rho") or 1.0)
    out = RateDiagnostics(kind=kind, C_loj=C, L_loj=L, provenance=prov)

    if kind == "binary":
        lam = float(params["lam"])
        if not (-1.0 <= lam < 0.0):
            raise ValueError("lam must lie in [-1, 0)")
        out.V_bound = v_envelope(fn, m, v, lam)
        if r + 1 <= n:
            out.xi = krawtchouk_least_root(r + 1, n)
            # multiplies the unknown constant C_d in the binary rate bound
            out.binary_coefficient = 2.0 * (fn * (1.0 - 2.0 * m / lam) + out.V_bound) * out.xi / n
        prov["xi"] = "computed"
        return out
    if kind != "ball":
        raise ValueError(f"unknown kind {kind!r}")

    delta = float(params["delta"])
    if not (0.0 < delta <= 1.0):
        raise ValueError("delta must lie in (0, 1]")
    L_f = params.get("L_f")
    prov["L_f"] = "user" if L_f is not None else "unset"
    out.L_f = None if L_f is None else float(L_f)
    out.U_bound = u_envelope(fn, m, v, delta)
    out.CB = ball_constant(n, max(d, 2 * l * (v + 1)))
    if out.CB is not None and out.L_f is not None:
        out.ball_rhs = (
            2.0 * (fn * (1.0 + m / delta) + out.U_bound) * out.CB / r**2
            + out.U_bound
            + C * out.L_f * delta**L
        )
    out.d_prime = max(math.ceil(d / 2), l)
    if r > 1:
        out.b = -2.0 * math.log(r) / math.log(A_CONST)
    if out.L_f is not None and out.L_f > 0 and out.b is not None:
        D = n + 2 * L + 5
        out.gamma = (n + 1) ** 2 * math.exp((n - 2) / 2) * out.d_prime ** ((n + 3) / 2) / (C * out.L_f)
        out.v_choice = math.floor(out.gamma ** (-2 / D) * out.b ** (2 * (L + 1) / D) * r ** (4 / D))
        out.delta_choice = out.gamma ** (2 / D) * out.b ** ((n + 3) / D) * r ** (-4 / D)
        E_f = params.get("E_f")
        if E_f is not None and float(E_f) > 0:
            out.E_f = float(E_f)
            expo = 1.0 + (n + 5) / (2.0 * L)
            out.degree_threshold = (
                (rho * m * n * max(C * out.L_f, 1.0)) ** expo
                * (math.e * out.d_prime) ** (D / 2)
                * out.E_f ** (-expo)
            )
    return out


def lipschitz_estimate(f: MultiPoly, samples: int = 10_000, seed: int = 0) -> tuple[float, float]:
    """Sampled lower estimate and coefficient upper bound of ``L_f`` on the ball.

    Returns ``(estimate, upper)`` where ``estimate`` is the largest
    ``||grad f(x)||_2`` over sampled ball points and
    ``upper = sum_alpha |f_alpha| |alpha|``.
    """
    if samples < 2:
        raise ValueError("samples must be at least 2")
    X = uniform_ball(samples, f.n, np.random.default_rng(seed))
    grads = np.stack([g.eval_many(X) for g in f.gradient()], axis=1)
    est = float(np.sqrt((grads**2).sum(axis=1)).max())
    upper = float(sum(abs(c) * sum(a) for a, c in f.items()))
    return est, upper


@dataclass
class MembershipRecord:
    member: bool
    eig_member: bool
    agree: bool
    coeffs: list
    lambda_min: float


def descartes_membership(G: SymPolyMatrix, x: Sequence[float], tol: float = 1e-9, coeffs=None) -> MembershipRecord:
    """Membership ``G(x) ⪰ 0`` through the characteristic-polynomial signs.

    ``coeffs`` may carry precomputed ``charpoly_coeffs(G)`` for repeated
    calls.  The record also holds the eigenvalue verdict for comparison.
    """
    if coeffs is None:
        coeffs = charpoly_coeffs(G)
    vals = [float(c.eval(x)) for c in coeffs]
    member = all(c >= -tol for c in vals)
    lam = float(np.linalg.eigvalsh(G.eval(x))[0])
    eig_member = lam >= -tol
    return MembershipRecord(member, eig_member, member == eig_member, vals, lam)
