"""Moment relaxations of polynomial optimisation under ``G(x) ⪰ 0``.

All relaxations are assembled from :class:`MomentTemplate` objects:
symmetric arrays of polynomials whose Riesz image ``L_y(entry)`` gives a
block of the SDP.  Shared monomials map to the same scalar variable and
``y_0 = 1`` is substituted, so the resulting :class:`~pmirelax.sdp.SDPProblem`
has one variable per nonconstant monomial.

Kinds
-----
``ProposedBinary`` / ``ProposedBall``
    ``M_r(y) ⪰ 0``, the domain constraint, and the trace blocks
    ``L_y(P_{v*}) ⪰ 0``, ``L_y(Q_{v*-1}) ⪰ 0`` with
    ``v* = ceil((floor(r/l) - 1)/2)``.
``BlockDiag``
    As ``ProposedBall`` (or binary) with one trace-block pair per
    diagonal block ``G_i``.
``HolScherer``
    ``M_r(y) ⪰ 0``, the domain constraint and the Kronecker localizing
    matrix ``L_y(G ⊗ b_{r-l} b_{r-l}^T) ⪰ 0``.
``ScalarLasserre``
    Scalar localizing matrices for ``g`` when ``m = 1``, for the diagonal
    entries of a diagonal ``G``, and for the characteristic-polynomial
    coefficients ``c_i(x) >= 0`` otherwise.

On the binary cube the relaxations work in the quotient ring modulo
``x_i^2 = x_i`` (square-free bases) unless ``explicit_equalities`` asks
for the literal form with ``M_{r-1}((x_i^2 - x_i) y) = 0``.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from math import comb
from typing import Sequence

import numpy as np

from .matpoly import SymPolyMatrix, charpoly_coeffs, normalize, trace_blocks
from .poly import MomentVector, MultiPoly, grlex_key, monomial_basis
from .sdp import (
    DEFAULT_TOL,
    Certificate,
    EqualityBlock,
    PSDBlock,
    SDPProblem,
    SDPSolution,
    extract_certificate,
    solve,
)

PROPOSED_BINARY = "ProposedBinary"
PROPOSED_BALL = "ProposedBall"
BLOCK_DIAG = "BlockDiag"
HOL_SCHERER = "HolScherer"
SCALAR_LASSERRE = "ScalarLasserre"
KINDS = (PROPOSED_BINARY, PROPOSED_BALL, BLOCK_DIAG, HOL_SCHERER, SCALAR_LASSERRE)


class RelaxationError(ValueError):
    """Invalid relaxation request (order too small, unnormalised data, ...)."""


@dataclass(frozen=True)
class RelaxSpec:
    """Which relaxation to build.

    Parameters
    ----------
    kind : str
        One of :data:`KINDS`.
    r : int
        Relaxation order.
    blocks : sequence of SymPolyMatrix, optional
        Diagonal blocks for ``BlockDiag``.
    domain : {"binary", "ball"}, optional
        Required for ``BlockDiag``, ``HolScherer`` and ``ScalarLasserre``;
        implied by the ``Proposed*`` kinds.
    explicit_equalities : bool
        Binary domain only: keep full monomial bases and pin
        ``M_{r-1}((x_i^2 - x_i) y)`` to zero instead of reducing.
    """

    kind: str
    r: int
    blocks: tuple[SymPolyMatrix, ...] | None = None
    domain: str | None = None
    explicit_equalities: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RelaxationError(f"unknown kind {self.kind!r}")
        implied = {PROPOSED_BINARY: "binary", PROPOSED_BALL: "ball"}.get(self.kind)
        dom = self.domain or implied
        if dom is None:
            raise RelaxationError(f"{self.kind} needs a domain ('binary' or 'ball')")
        if implied and dom != implied:
            raise RelaxationError(f"{self.kind} is defined on the {implied} domain")
        if dom not in ("binary", "ball"):
            raise RelaxationError(f"unknown domain {dom!r}")
        object.__setattr__(self, "domain", dom)
        if self.blocks is not None:
            object.__setattr__(self, "blocks", tuple(self.blocks))
        if self.kind == BLOCK_DIAG and not self.blocks:
            raise RelaxationError("BlockDiag requires blocks")
        if self.explicit_equalities and dom != "binary":
            raise RelaxationError("explicit_equalities applies to the binary domain only")

    @property
    def binary(self) -> bool:
        return self.domain == "binary"

    @property
    def reduced(self) -> bool:
        """Whether the square-free quotient representation is used."""
        return self.binary and not self.explicit_equalities


@dataclass(frozen=True)
class MomentTemplate:
    """Polynomial array whose Riesz image is one SDP block."""

    name: str
    row_basis: tuple
    entry_polys: list
    equality_flag: bool = False
    role: str = "moment"

    @property
    def size(self) -> int:
        return len(self.entry_polys)

    def degree(self) -> int:
        return max((p.degree() for row in self.entry_polys for p in row), default=0)

    def riesz(self, y: MomentVector) -> np.ndarray:
        from .poly import riesz

        s = self.size
        out = np.empty((s, s))
        for i in range(s):
            for j in range(i, s):
                out[i, j] = out[j, i] = riesz(self.entry_polys[i][j], y)
        return out


def _reduce(p: MultiPoly, squarefree: bool) -> MultiPoly:
    return p.reduce_binary() if squarefree else p


def moment_template(n: int, r: int, squarefree: bool = False) -> MomentTemplate:
    """``M_r(y)`` on ``b_r(x)`` (square-free basis if requested)."""
    if r < 0:
        raise RelaxationError("order must be nonnegative")
    basis = monomial_basis(n, r, squarefree=squarefree)
    polys = []
    for a in basis:
        row = []
        for b in basis:
            e = tuple(i + j for i, j in zip(a, b))
            row.append(_reduce(MultiPoly.monomial(e), squarefree))
        polys.append(row)
    return MomentTemplate("M", tuple(basis), polys, False, "moment")


def localize_scalar(
    g: MultiPoly,
    n: int,
    r: int,
    squarefree: bool = False,
    equality: bool = False,
    name: str = "loc",
    role: str = "domain",
) -> MomentTemplate:
    """``M_{r - ceil(deg g / 2)}(g y)``: entry ``(a, b)`` is ``g x^{a+b}``."""
    order = r - (g.degree() + 1) // 2
    if order < 0:
        raise RelaxationError(f"order {r} too small for a constraint of degree {g.degree()}")
    basis = monomial_basis(n, order, squarefree=squarefree)
    polys = []
    for a in basis:
        row = []
        for b in basis:
            e = tuple(i + j for i, j in zip(a, b))
            row.append(_reduce(g * MultiPoly.monomial(e), squarefree))
        polys.append(row)
    return MomentTemplate(name, tuple(basis), polys, equality, role)


def localize_kron(G: SymPolyMatrix, n: int, r: int, squarefree: bool = False, name: str = "kron") -> MomentTemplate:
    """``L_y(G ⊗ b_{r-l} b_{r-l}^T)``, size ``m * |b_{r-l}|``.

    Rows are ordered ``(a, beta)`` with the matrix index ``a`` outermost.
    """
    l = G.l
    if r < l:
        raise RelaxationError(f"order {r} below l = {l}")
    basis = monomial_basis(n, r - l, squarefree=squarefree)
    labels = tuple((a, beta) for a in range(G.m) for beta in basis)
    mons = {}
    polys = []
    for a, beta in labels:
        row = []
        for b, gamma in labels:
            e = tuple(i + j for i, j in zip(beta, gamma))
            if e not in mons:
                mons[e] = MultiPoly.monomial(e)
            row.append(_reduce(G[a, b] * mons[e], squarefree))
        polys.append(row)
    return MomentTemplate(name, labels, polys, False, "kron")


def trace_order(r: int, l: int) -> int:
    """Degree bound ``k = floor(r/l) - 1`` on ``h`` in the trace-block module."""
    return r // l - 1


def v_star(r: int, l: int) -> int:
    """Trace-block order ``ceil((floor(r/l) - 1) / 2)``; negative when blocks are omitted."""
    k = trace_order(r, l)
    return -1 if k < 0 else (k + 1) // 2


def trace_templates(G: SymPolyMatrix, r: int, squarefree: bool, suffix: str = "") -> list[MomentTemplate]:
    vs = v_star(r, G.l)
    if vs < 0:
        return []
    tb = trace_blocks(G, vs, binary=squarefree)
    out = [MomentTemplate("P" + suffix, tuple(range(vs + 1)), tb.P, False, "trace")]
    if vs >= 1:
        out.append(MomentTemplate("Q" + suffix, tuple(range(vs)), tb.Q, False, "trace"))
    return out


def is_normalized(G: SymPolyMatrix, domain: str, samples: int = 10_000, seed: int = 0) -> tuple[bool, str]:
    """Check ``max rho(G(x)) <= 1`` on the domain.

    The coefficient bound ``sum ||g_ij||_1 <= 1`` is sufficient on both
    domains.  Otherwise the cube is enumerated (n <= 16) or the ball is
    sampled; the second element of the result says which test decided.
    """
    total = sum(G[i, j].coef_norm() for i in range(G.m) for j in range(G.m))
    if total <= 1.0 + 1e-12:
        return True, "coefficient-bound"
    if domain == "binary" and G.n <= 16:
        import itertools

        X = np.array(list(itertools.product([0.0, 1.0], repeat=G.n)))
        rho = np.max(np.abs(np.linalg.eigvalsh(G.eval_many(X))))
        return bool(rho <= 1.0 + 1e-9), "enumeration"
    from .oracle import uniform_ball

    X = uniform_ball(samples, G.n, np.random.default_rng(seed))
    if domain == "binary":
        X = (X > 0).astype(float)
    rho = np.max(np.abs(np.linalg.eigvalsh(G.eval_many(X))))
    return bool(rho <= 1.0 + 1e-9), "sampled"


@dataclass
class RelaxationData:
    """Polynomial side of a built SDP, kept for certificates and reports."""

    kind: str
    r: int
    domain: str
    binary: bool  # True when working modulo x_i^2 = x_i
    f: MultiPoly
    objective_scale: float
    block_polys: dict
    equality_polys: dict
    roles: dict
    trace_pairs: list
    moment_block: str
    monomials: list
    moment_order: int
    v_stars: list
    G_scales: list
    normalization: list = field(default_factory=list)

    def metadata_json(self) -> dict:
        return {
            "kind": self.kind,
            "r": self.r,
            "domain": self.domain,
            "v_star": self.v_stars[0] if len(self.v_stars) == 1 else self.v_stars,
            "objective_scale": self.objective_scale,
            "G_scale": self.G_scales[0] if len(self.G_scales) == 1 else self.G_scales,
            "normalization_check": self.normalization,
            "moment_order": self.moment_order,
            "num_moments": len(self.monomials),
        }


def _prepare_matrix(G: SymPolyMatrix, domain: str, auto: bool) -> tuple[SymPolyMatrix, float, str]:
    if auto:
        Gn, scale = normalize(G, domain)
        return Gn, scale, "auto"
    ok, how = is_normalized(G, domain)
    if not ok:
        raise RelaxationError("G violates max rho(G(x)) <= 1 on the domain; request normalization")
    return G, 1.0, how


def _templates(f: MultiPoly, G: SymPolyMatrix | None, spec: RelaxSpec, auto_normalize: bool):
    n = f.n
    r = spec.r
    sq = spec.reduced
    mats: list[SymPolyMatrix] = []
    scales: list[float] = []
    checks: list[str] = []
    if spec.kind == BLOCK_DIAG:
        for B in spec.blocks:
            Bn, s, how = _prepare_matrix(B, spec.domain, auto_normalize)
            mats.append(Bn)
            scales.append(s)
            checks.append(how)
    elif G is not None:
        Gn, s, how = _prepare_matrix(G, spec.domain, auto_normalize)
        mats.append(Gn)
        scales.append(s)
        checks.append(how)
    for M in mats:
        if M.n != n:
            raise RelaxationError("objective and constraint dimensions differ")
    d = f.degree()
    r_min = max([(d + 1) // 2] + [M.l for M in mats])
    scalar_cons: list[MultiPoly] = []
    if spec.kind == SCALAR_LASSERRE and mats:
        G0 = mats[0]
        if G0.m == 1:
            scalar_cons = [G0[0, 0]]
        elif G0.is_diagonal():
            scalar_cons = [G0[i, i] for i in range(G0.m)]
        else:
            scalar_cons = charpoly_coeffs(G0, binary=sq)
        scalar_cons = [_reduce(c, sq) for c in scalar_cons]
        r_min = max([(d + 1) // 2] + [(c.degree() + 1) // 2 for c in scalar_cons])
    if r < r_min:
        raise RelaxationError(f"relaxation order {r} below the minimum {r_min}")
    if spec.kind in (PROPOSED_BINARY, PROPOSED_BALL, BLOCK_DIAG) and mats:
        l_max = max(M.l for M in mats)
        if r < 3 * l_max:
            warnings.warn(
                f"r = {r} < 3l = {3 * l_max}: trace blocks are small at this order",
                RuntimeWarning,
                stacklevel=3,
            )
    temps: list[MomentTemplate] = [moment_template(n, r, squarefree=sq)]
    if spec.domain == "ball":
        ball = MultiPoly.constant(n, 1.0) - sum(
            (MultiPoly.variable(n, i) ** 2 for i in range(n)), MultiPoly.zero(n)
        )
        temps.append(localize_scalar(ball, n, r, name="ball", role="domain"))
    elif spec.explicit_equalities:
        for i in range(n):
            xi = MultiPoly.variable(n, i)
            temps.append(localize_scalar(xi * xi - xi, n, r, equality=True, name=f"bin{i + 1}", role="domain"))
    vstars: list[int] = []
    if not mats:
        pass  # unconstrained: only the domain description remains
    elif spec.kind in (PROPOSED_BINARY, PROPOSED_BALL):
        temps += trace_templates(mats[0], r, sq)
        vstars.append(v_star(r, mats[0].l))
    elif spec.kind == BLOCK_DIAG:
        for i, M in enumerate(mats, start=1):
            temps += trace_templates(M, r, sq, suffix=str(i))
            vstars.append(v_star(r, M.l))
    elif spec.kind == HOL_SCHERER:
        temps.append(localize_kron(mats[0], n, r, squarefree=sq))
    else:
        for i, c in enumerate(scalar_cons, start=1):
            temps.append(localize_scalar(c, n, r, squarefree=sq, name=f"g{i}", role="scalar"))
    for t in temps:
        if t.role != "trace" and t.degree() > 2 * r:
            raise AssertionError(f"template {t.name} has degree {t.degree()} > 2r = {2 * r}")
    return temps, mats, scales, checks, vstars


def _var_name(alpha) -> str:
    return "y[" + ",".join(str(a) for a in alpha) + "]"


def _assemble(f: MultiPoly, G: SymPolyMatrix | None, spec: RelaxSpec, auto_normalize: bool):
    n = f.n
    if spec.reduced:
        f = f.reduce_binary()
    temps, mats, scales, checks, vstars = _templates(f, G, spec, auto_normalize)
    fscale = max(1.0, f.coef_norm())
    fs = f.scale(1.0 / fscale)
    mons = set(fs.terms)
    for t in temps:
        for row in t.entry_polys:
            for p in row:
                mons.update(p.terms)
    zero = (0,) * n
    mons.discard(zero)
    ordered = sorted(mons, key=grlex_key)
    index = {a: k for k, a in enumerate(ordered, start=1)}
    index[zero] = 0
    data = RelaxationData(
        kind=spec.kind,
        r=spec.r,
        domain=spec.domain,
        binary=spec.reduced,
        f=fs,
        objective_scale=fscale,
        block_polys={},
        equality_polys={},
        roles={},
        trace_pairs=[],
        moment_block="M",
        monomials=[zero] + ordered,
        moment_order=max([0] + [sum(a) for a in ordered]),
        v_stars=vstars,
        G_scales=scales,
        normalization=checks,
    )
    return temps, data, index, [_var_name(a) for a in ordered]


def build(
    f: MultiPoly, G: SymPolyMatrix | None, spec: RelaxSpec, auto_normalize: bool = False
) -> SDPProblem:
    """Moment SDP (a minimisation over the moment variables).

    Parameters
    ----------
    f : MultiPoly
        Objective.
    G : SymPolyMatrix or None
        Constraint matrix (ignored for ``BlockDiag``, which uses ``spec.blocks``).
    spec : RelaxSpec
    auto_normalize : bool
        Divide each constraint matrix by its coefficient-norm scale.
        Without it, matrices failing the normalisation check are rejected.

    Returns
    -------
    SDPProblem
        The objective is ``L_y(f) / max(1, ||f||_1)``; multiply the optimal
        value by ``metadata["relaxation"].objective_scale`` (or use
        :func:`solve_relaxation`) to obtain the bound.
    """
    temps, data, index, names = _assemble(f, G, spec, auto_normalize)
    psd, eqs = [], []
    for t in temps:
        if t.equality_flag:
            rows, polys = [], []
            for i in range(t.size):
                for j in range(i, t.size):
                    p = t.entry_polys[i][j]
                    if not p.is_zero():
                        rows.append({index[a]: c for a, c in p.terms.items()})
                        polys.append(p)
            eqs.append(EqualityBlock(t.name, tuple(rows)))
            data.equality_polys[t.name] = polys
        else:
            coefs: dict[int, dict] = {}
            for i in range(t.size):
                for j in range(i, t.size):
                    for a, c in t.entry_polys[i][j].terms.items():
                        coefs.setdefault(index[a], {})[(i, j)] = c
            psd.append(PSDBlock(t.name, t.size, coefs))
            data.block_polys[t.name] = t.entry_polys
        data.roles[t.name] = t.role
    data.trace_pairs = _trace_pairs(temps)
    objective = {index[a]: c for a, c in data.f.terms.items()}
    meta = {
        "form": "moment",
        "relaxation": data,
        "nominal_kron_size": _nominal_kron(spec, G),
    }
    return SDPProblem(tuple(names), objective, "min", tuple(psd), tuple(eqs), metadata=meta)


def _trace_pairs(temps: Sequence[MomentTemplate]) -> list:
    names = {t.name for t in temps}
    pairs = []
    for t in temps:
        if t.role == "trace" and t.name.startswith("P"):
            q = "Q" + t.name[1:]
            pairs.append((t.name, q if q in names else None))
    return pairs


def _nominal_kron(spec: RelaxSpec, G: SymPolyMatrix | None) -> int | None:
    if spec.kind != HOL_SCHERER or G is None:
        return None
    return G.m * comb(G.n + spec.r - G.l, G.n)


def build_sos_dual(
    f: MultiPoly, G: SymPolyMatrix | None, spec: RelaxSpec, auto_normalize: bool = False
) -> SDPProblem:
    """SOS side: ``max t`` subject to coefficient matching.

    For every monomial ``alpha`` of the moment problem,
    ``f_alpha = sum_b <X_b, B^b_alpha> + sum_e w_e a^e_alpha + t [alpha = 0]``
    with PSD Gram matrices ``X_b`` (one per block of :func:`build`) and
    free multipliers ``w_e`` for equality rows.
    """
    moment = build(f, G, spec, auto_normalize)
    data: RelaxationData = moment.metadata["relaxation"]
    nmon = len(data.monomials)
    names = ["t"]
    gram_layout: dict[str, tuple[int, dict]] = {}
    psd = []
    # coefficient rows: one per monomial index k = 0..nmon-1
    rows: list[dict[int, float]] = [dict() for _ in range(nmon)]
    for b in moment.psd_blocks:
        idx = {}
        for i in range(b.size):
            for j in range(i, b.size):
                names.append(f"{b.name}[{i},{j}]")
                idx[(i, j)] = len(names)
        gram_layout[b.name] = (b.size, idx)
        psd.append(PSDBlock(b.name, b.size, {v: {ij: 1.0} for ij, v in idx.items()}))
        for k, ent in b.coefs.items():
            for (i, j), c in ent.items():
                var = idx[(i, j)]
                rows[k][var] = rows[k].get(var, 0.0) + (c if i == j else 2.0 * c)
    mult_layout = {}
    for e in moment.equality_blocks:
        idx = []
        for r_i, row in enumerate(e.rows):
            names.append(f"{e.name}<{r_i}>")
            var = len(names)
            idx.append(var)
            for k, c in row.items():
                rows[k][var] = rows[k].get(var, 0.0) + c
        mult_layout[e.name] = idx
    rows[0][1] = rows[0].get(1, 0.0) + 1.0  # t
    for k in range(nmon):
        fk = moment.objective.get(k, 0.0)
        if fk:
            rows[k][0] = -fk
    eq = EqualityBlock("coef", tuple(rows))
    meta = {
        "form": "sos",
        "relaxation": data,
        "gram_layout": gram_layout,
        "multiplier_layout": mult_layout,
        "t_index": 1,
        "nominal_kron_size": moment.metadata.get("nominal_kron_size"),
    }
    return SDPProblem(tuple(names), {1: 1.0}, "max", tuple(psd), (eq,), metadata=meta)


def localizing_blocks(p: SDPProblem) -> list[tuple[str, int]]:
    """Blocks that carry the matrix constraint (trace, Kronecker or scalar)."""
    data: RelaxationData = p.metadata["relaxation"]
    return [(b.name, b.size) for b in p.psd_blocks if data.roles.get(b.name) in ("trace", "kron", "scalar")]


def size_report(p: SDPProblem, baseline: SDPProblem | None = None) -> dict:
    """Block inventory, optionally compared with a baseline relaxation.

    Returns
    -------
    dict
        ``blocks`` (rows of name, kind, role, size, variable count),
        ``largest_localizing``, ``total_variables`` and, when ``baseline``
        is given, ``baseline_largest_localizing`` and ``ratio``
        (baseline over this problem).
    """
    data: RelaxationData | None = p.metadata.get("relaxation")
    rows = []
    for row in p.size_report():
        row = dict(row)
        row["role"] = data.roles.get(row["block"], "?") if data else "?"
        rows.append(row)
    loc = localizing_blocks(p) if data else []
    out = {
        "blocks": rows,
        "largest_localizing": max((s for _, s in loc), default=0),
        "largest_block": max((b.size for b in p.psd_blocks), default=0),
        "total_variables": p.num_vars,
        "nominal_kron_size": p.metadata.get("nominal_kron_size"),
    }
    if baseline is not None:
        base = max((s for _, s in localizing_blocks(baseline)), default=0)
        out["baseline_largest_localizing"] = base
        out["ratio"] = base / out["largest_localizing"] if out["largest_localizing"] else math.inf
    return out


def moment_vector(p: SDPProblem, sol: SDPSolution) -> MomentVector:
    data: RelaxationData = p.metadata["relaxation"]
    vals = {data.monomials[0]: 1.0}
    for k, a in enumerate(data.monomials[1:]):
        vals[a] = float(sol.x[k])
    return MomentVector(data.f.n, data.moment_order, vals)


@dataclass
class RelaxResult:
    """Bound and bookkeeping for one solved relaxation."""

    spec: RelaxSpec
    bound: float
    status: str
    solution: SDPSolution
    problem: SDPProblem
    certificate: Certificate | None = None
    wall_time: float = 0.0

    @property
    def data(self) -> RelaxationData:
        return self.problem.metadata["relaxation"]

    def to_json(self) -> dict:
        rep = size_report(self.problem)
        out = {
            "kind": self.spec.kind,
            "r": self.spec.r,
            "domain": self.spec.domain,
            "bound": self.bound if math.isfinite(self.bound) else str(self.bound),
            "status": self.status,
            "solution": self.solution.to_json(),
            "relaxation": self.data.metadata_json(),
            "blocks": rep["blocks"],
            "largest_localizing": rep["largest_localizing"],
            "total_variables": rep["total_variables"],
            "wall_time": self.wall_time,
        }
        if self.certificate is not None:
            out["certificate"] = self.certificate.to_json()
        return out


def solve_relaxation(
    f: MultiPoly,
    G: SymPolyMatrix | None,
    spec: RelaxSpec,
    tol: float = DEFAULT_TOL,
    auto_normalize: bool = False,
    certify: bool = False,
) -> RelaxResult:
    """Build, solve and un-scale; optionally extract a certificate."""
    t0 = time.perf_counter()
    p = build(f, G, spec, auto_normalize=auto_normalize)
    sol = solve(p, tol=tol)
    data: RelaxationData = p.metadata["relaxation"]
    if sol.status in ("optimal", "near_optimal"):
        bound = sol.objective * data.objective_scale
        sol.y = moment_vector(p, sol)
    elif sol.status == "infeasible":
        bound = math.inf
    else:
        bound = math.nan
    cert = None
    if certify and sol.status in ("optimal", "near_optimal"):
        cert = extract_certificate(p, sol)
    return RelaxResult(spec, bound, sol.status, sol, p, cert, time.perf_counter() - t0)
