"""Block-structured SDPs: data model, SDPA sparse I/O, solving and certificates.

An :class:`SDPProblem` is stored in linear-matrix-inequality form over
scalar variables ``x_1..x_m``::

    optimise   c_0 + sum_k c_k x_k
    subject to C_0^b + sum_k x_k C_k^b  ⪰ 0     for every PSD block b,
               a_0^e + sum_k a_k^e x_k  = 0     for every equality row e.

Coefficient maps use key ``0`` for the constant and key ``k`` for the
variable ``x_k`` (1-based, matching SDPA's ``matno``).  PSD block
entries are stored upper-triangular.

The moment relaxations are minimisations of this form over the moment
variables; the dual multipliers of their PSD blocks are the Gram
matrices of the SOS certificate.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Protocol, Sequence

import numpy as np
import scipy.sparse as sp

DEFAULT_TOL = 1e-8
EIG_FLOOR = 1e-9
CERT_REJECT = 1e-5
_SQRT2 = math.sqrt(2.0)

STATUSES = ("optimal", "near_optimal", "infeasible", "unbounded", "numerical_failure")


class SDPFormatError(ValueError):
    """Malformed SDPA input."""


class CertificateError(RuntimeError):
    """The recovered certificate does not reproduce the objective."""


@dataclass(frozen=True)
class PSDBlock:
    """Affine symmetric matrix ``C_0 + sum_k x_k C_k`` constrained to be PSD."""

    name: str
    size: int
    coefs: Mapping[int, Mapping[tuple[int, int], float]]

    def __post_init__(self):
        clean: dict[int, dict[tuple[int, int], float]] = {}
        for k, entries in self.coefs.items():
            d: dict[tuple[int, int], float] = {}
            for (i, j), v in entries.items():
                if not (0 <= i < self.size and 0 <= j < self.size):
                    raise ValueError(f"entry ({i},{j}) outside block {self.name} of size {self.size}")
                if i > j:
                    i, j = j, i
                d[(i, j)] = d.get((i, j), 0.0) + float(v)
            d = {ij: v for ij, v in d.items() if v != 0.0}
            if d:
                clean[int(k)] = d
        object.__setattr__(self, "coefs", clean)

    def matrix(self, x: np.ndarray) -> np.ndarray:
        M = np.zeros((self.size, self.size))
        for k, entries in self.coefs.items():
            w = 1.0 if k == 0 else x[k - 1]
            for (i, j), v in entries.items():
                M[i, j] += w * v
                if i != j:
                    M[j, i] += w * v
        return M

    def coef_matrix(self, k: int) -> np.ndarray:
        M = np.zeros((self.size, self.size))
        for (i, j), v in self.coefs.get(k, {}).items():
            M[i, j] = M[j, i] = v
        return M


@dataclass(frozen=True)
class EqualityBlock:
    """Named group of affine equations ``a_0 + sum_k a_k x_k = 0``."""

    name: str
    rows: tuple[Mapping[int, float], ...]

    def __post_init__(self):
        rows = []
        for row in self.rows:
            r = {int(k): float(v) for k, v in row.items() if v != 0.0}
            rows.append(r)
        object.__setattr__(self, "rows", tuple(rows))

    @property
    def size(self) -> int:
        return len(self.rows)

    def values(self, x: np.ndarray) -> np.ndarray:
        return np.array(
            [math.fsum(v * (1.0 if k == 0 else x[k - 1]) for k, v in row.items()) for row in self.rows]
        )


@dataclass(frozen=True)
class SDPProblem:
    """SDP in linear-matrix-inequality form (see module docstring)."""

    var_names: tuple[str, ...]
    objective: Mapping[int, float]
    sense: str
    psd_blocks: tuple[PSDBlock, ...]
    equality_blocks: tuple[EqualityBlock, ...] = ()
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        object.__setattr__(self, "var_names", tuple(self.var_names))
        object.__setattr__(self, "psd_blocks", tuple(self.psd_blocks))
        object.__setattr__(self, "equality_blocks", tuple(self.equality_blocks))
        obj = {int(k): float(v) for k, v in self.objective.items() if v != 0.0}
        object.__setattr__(self, "objective", obj)
        m = len(self.var_names)
        for k in obj:
            if not 0 <= k <= m:
                raise ValueError(f"objective references unknown variable {k}")
        for b in self.psd_blocks:
            for k in b.coefs:
                if not 0 <= k <= m:
                    raise ValueError(f"block {b.name} references unknown variable {k}")
        for e in self.equality_blocks:
            for row in e.rows:
                for k in row:
                    if not 0 <= k <= m:
                        raise ValueError(f"equality {e.name} references unknown variable {k}")

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    def objective_value(self, x: np.ndarray) -> float:
        return math.fsum(v * (1.0 if k == 0 else x[k - 1]) for k, v in self.objective.items())

    def block(self, name: str) -> PSDBlock:
        for b in self.psd_blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def size_report(self) -> list[dict]:
        """Inventory rows ``{block, kind, size, variables}``.

        ``variables`` counts the free entries of a symmetric block
        (``s (s + 1) / 2``) or the number of equations.
        """
        rows = [
            {"block": b.name, "kind": "psd", "size": b.size, "variables": b.size * (b.size + 1) // 2}
            for b in self.psd_blocks
        ]
        rows += [
            {"block": e.name, "kind": "equality", "size": e.size, "variables": e.size}
            for e in self.equality_blocks
        ]
        return rows


# ---------------------------------------------------------------------------
# SDPA sparse format
# ---------------------------------------------------------------------------
def _fmt(v: float) -> str:
    return repr(float(v))


def export_sdpa(p: SDPProblem, path: str | Path | None = None) -> str:
    """Write ``p`` in SDPA sparse format and return the text.

    SDPA's primal reads ``min c^T x`` subject to ``sum_k F_k x_k - F_0 ⪰ 0``,
    so ``F_0 = -C_0`` and ``F_k = C_k``; maximisation problems are written
    with ``c`` negated.  Every equality block becomes one diagonal (LP)
    block of size ``2E`` holding the pair ``a(x) >= 0``, ``-a(x) >= 0`` for
    each of its ``E`` equations.  Header comment lines record the sense,
    the objective constant and the names needed to read the file back.
    """
    lines = ['"pmirelax SDPA sparse export']
    lines.append(f"* sense {p.sense}")
    lines.append(f"* offset {_fmt(p.objective.get(0, 0.0))}")
    for k, name in enumerate(p.var_names, start=1):
        lines.append(f"* var {k} {name}")
    nb = 0
    for b in p.psd_blocks:
        nb += 1
        lines.append(f"* block {nb} psd {b.name} {b.size}")
    for e in p.equality_blocks:
        nb += 1
        lines.append(f"* block {nb} eq {e.name} {e.size}")
    lines.append(str(p.num_vars))
    lines.append(str(nb))
    struct = [str(b.size) for b in p.psd_blocks] + [str(-2 * e.size) for e in p.equality_blocks]
    lines.append(" ".join(struct))
    sign = 1.0 if p.sense == "min" else -1.0
    lines.append(" ".join(_fmt(sign * p.objective.get(k, 0.0) + 0.0) for k in range(1, p.num_vars + 1)))
    entries: list[tuple[int, int, int, int, float]] = []
    for bi, b in enumerate(p.psd_blocks, start=1):
        for k, ent in b.coefs.items():
            for (i, j), v in ent.items():
                entries.append((k, bi, i + 1, j + 1, -v if k == 0 else v))
    for ei, e in enumerate(p.equality_blocks, start=len(p.psd_blocks) + 1):
        for r, row in enumerate(e.rows):
            for k, v in row.items():
                val = -v if k == 0 else v
                entries.append((k, ei, 2 * r + 1, 2 * r + 1, val))
                entries.append((k, ei, 2 * r + 2, 2 * r + 2, -val))
    entries.sort(key=lambda t: t[:4])
    for k, bi, i, j, v in entries:
        lines.append(f"{k} {bi} {i} {j} {_fmt(v + 0.0)}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def read_sdpa(source: str | Path) -> SDPProblem:
    """Parse SDPA sparse text (or a path to it) into an :class:`SDPProblem`.

    Files written by :func:`export_sdpa` are restored exactly.  For other
    files every diagonal block entry becomes a ``1 x 1`` PSD block.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        text = Path(source).read_text()
    else:
        text = str(source)
    sense, offset = "min", 0.0
    names: dict[int, str] = {}
    block_info: dict[int, tuple[str, str, int]] = {}
    body: list[str] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line[0] in "\"*":
            toks = line[1:].split()
            if len(toks) >= 2 and toks[0] == "sense":
                sense = toks[1]
            elif len(toks) >= 2 and toks[0] == "offset":
                offset = float(toks[1])
            elif len(toks) >= 3 and toks[0] == "var":
                names[int(toks[1])] = " ".join(toks[2:])
            elif len(toks) >= 5 and toks[0] == "block":
                block_info[int(toks[1])] = (toks[2], toks[3], int(toks[4]))
            continue
        body.append(line)
    try:
        tokens = " ".join(body).replace(",", " ").replace("{", " ").replace("}", " ")
        tokens = tokens.replace("(", " ").replace(")", " ").split()
        mdim = int(tokens[0])
        nblock = int(tokens[1])
        struct = [int(float(t)) for t in tokens[2 : 2 + nblock]]
        pos = 2 + nblock
        c = [float(t) for t in tokens[pos : pos + mdim]]
        pos += mdim
        rest = tokens[pos:]
        if len(rest) % 5:
            raise SDPFormatError("entry lines must have five fields")
        ent = [
            (int(rest[q]), int(rest[q + 1]), int(rest[q + 2]), int(rest[q + 3]), float(rest[q + 4]))
            for q in range(0, len(rest), 5)
        ]
    except (IndexError, ValueError) as exc:
        raise SDPFormatError(f"cannot parse SDPA data: {exc}") from exc
    sign = 1.0 if sense == "min" else -1.0
    objective = {k: sign * v for k, v in enumerate(c, start=1) if v != 0.0}
    if offset:
        objective[0] = offset
    var_names = tuple(names.get(k, f"x{k}") for k in range(1, mdim + 1))
    per_block: dict[int, list] = {b: [] for b in range(1, nblock + 1)}
    for k, b, i, j, v in ent:
        if not 1 <= b <= nblock:
            raise SDPFormatError(f"block index {b} out of range")
        per_block[b].append((k, i - 1, j - 1, v))
    psd, eqs = [], []
    for b in range(1, nblock + 1):
        size = struct[b - 1]
        kind, name, _ = block_info.get(b, ("psd" if size > 0 else "lp", f"B{b}", abs(size)))
        if kind == "psd":
            coefs: dict[int, dict] = {}
            for k, i, j, v in per_block[b]:
                coefs.setdefault(k, {})[(i, j)] = -v if k == 0 else v
            psd.append(PSDBlock(name, size, coefs))
        elif kind == "eq":
            nrows = abs(size) // 2
            rows = [dict() for _ in range(nrows)]
            for k, i, j, v in per_block[b]:
                if i % 2 == 0:
                    rows[i // 2][k] = -v if k == 0 else v
            eqs.append(EqualityBlock(name, tuple(rows)))
        else:
            diag: dict[int, dict] = {}
            for k, i, j, v in per_block[b]:
                diag.setdefault(i, {})[k] = -v if k == 0 else v
            for i in range(abs(size)):
                psd.append(PSDBlock(f"{name}_{i + 1}", 1, {k: {(0, 0): v} for k, v in diag.get(i, {}).items()}))
    return SDPProblem(var_names, objective, sense, tuple(psd), tuple(eqs))


# ---------------------------------------------------------------------------
# solver adapter
# ---------------------------------------------------------------------------
@dataclass
class BackendResult:
    """Raw output of a backend; only ``x`` and the duals are trusted as data."""

    status: str  # one of STATUSES, as judged by the backend
    x: np.ndarray
    psd_duals: list[np.ndarray]
    eq_duals: list[np.ndarray]
    iterations: int = 0
    message: str = ""


class SolverBackend(Protocol):
    name: str

    def solve(self, p: SDPProblem, tol: float) -> BackendResult:  # pragma: no cover - protocol
        ...


def _svec_index(i: int, j: int) -> int:
    # upper triangle, column-major
    return j * (j + 1) // 2 + i


_STATUS_MAP = {
    "Solved": "optimal",
    "AlmostSolved": "near_optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
}


def _svec_rows(blk: "PSDBlock", k: int) -> dict[int, float]:
    """``svec`` of ``C_k`` for one block (off-diagonals scaled by sqrt 2)."""
    return {
        _svec_index(i, j): v * (1.0 if i == j else _SQRT2) for (i, j), v in blk.coefs.get(k, {}).items()
    }


def _unsvec(u: np.ndarray, s: int) -> np.ndarray:
    Z = np.zeros((s, s))
    for j in range(s):
        for i in range(j + 1):
            val = u[_svec_index(i, j)]
            if i == j:
                Z[i, i] = val
            else:
                Z[i, j] = Z[j, i] = val / _SQRT2
    return Z


class ClarabelBackend:
    """Binding to the Clarabel interior-point solver (PSD triangle cones).

    Parameters
    ----------
    max_iter : int
    dualize : bool
        Hand Clarabel the Lagrange dual of the LMI form, so that the block
        multipliers ``Z_b`` are the cone variables and ``x`` is read off the
        equality multipliers.  Exact moment relaxations have no interior
        point, and this orientation is markedly more accurate on them.
    **settings
        Overrides for ``clarabel.DefaultSettings`` attributes.
    """

    name = "clarabel"

    def __init__(self, max_iter: int = 400, dualize: bool = True, **settings):
        self.max_iter = max_iter
        self.dualize = dualize
        self.settings = {"max_step_fraction": 0.95, **settings}

    def _settings(self, tol: float):
        import clarabel

        st = clarabel.DefaultSettings()
        st.verbose = False
        st.tol_gap_abs = tol
        st.tol_gap_rel = tol
        st.tol_feas = tol
        st.tol_infeas_abs = tol
        st.tol_infeas_rel = tol
        st.max_iter = self.max_iter
        for key, val in self.settings.items():
            setattr(st, key, val)
        return st

    @staticmethod
    def _cone(clarabel, size: int):
        return clarabel.PSDTriangleConeT(size) if size > 1 else clarabel.NonnegativeConeT(1)

    def solve(self, p: SDPProblem, tol: float) -> BackendResult:
        return self._solve_dual(p, tol) if self.dualize else self._solve_lmi(p, tol)

    def _solve_lmi(self, p: SDPProblem, tol: float) -> BackendResult:
        # min c'x  s.t.  b - A x in K  with  b = svec(C_0), A = -svec(C_k)
        import clarabel

        m = p.num_vars
        rows, cols, vals = [], [], []
        b: list[float] = []
        cones = []
        n_eq = sum(e.size for e in p.equality_blocks)
        r0 = 0
        for e in p.equality_blocks:
            for row in e.rows:
                b.append(row.get(0, 0.0))
                for k, v in row.items():
                    if k:
                        rows.append(r0)
                        cols.append(k - 1)
                        vals.append(-v)
                r0 += 1
        if n_eq:
            cones.append(clarabel.ZeroConeT(n_eq))
        for blk in p.psd_blocks:
            dim = blk.size * (blk.size + 1) // 2
            bb = np.zeros(dim)
            for idx, v in _svec_rows(blk, 0).items():
                bb[idx] = v
            b.extend(bb.tolist())
            for k in blk.coefs:
                if k == 0:
                    continue
                for idx, v in _svec_rows(blk, k).items():
                    rows.append(r0 + idx)
                    cols.append(k - 1)
                    vals.append(-v)
            cones.append(self._cone(clarabel, blk.size))
            r0 += dim
        A = sp.csc_matrix((vals, (rows, cols)), shape=(r0, m))
        sign = 1.0 if p.sense == "min" else -1.0
        q = np.array([sign * p.objective.get(k, 0.0) for k in range(1, m + 1)])
        solver = clarabel.DefaultSolver(
            sp.csc_matrix((m, m)), q, A, np.asarray(b, dtype=float), cones, self._settings(tol)
        )
        sol = solver.solve()
        raw = str(sol.status)
        z = np.asarray(sol.z, dtype=float)
        eq_duals, psd_duals = [], []
        pos = 0
        for e in p.equality_blocks:
            eq_duals.append(z[pos : pos + e.size].copy())
            pos += e.size
        for blk in p.psd_blocks:
            psd_duals.append(_unsvec(z[pos:], blk.size))
            pos += blk.size * (blk.size + 1) // 2
        return BackendResult(
            status=_STATUS_MAP.get(raw, "numerical_failure"),
            x=np.asarray(sol.x, dtype=float),
            psd_duals=psd_duals,
            eq_duals=eq_duals,
            iterations=int(sol.iterations),
            message=raw,
        )

    def _solve_dual(self, p: SDPProblem, tol: float) -> BackendResult:
        # min <C_0, Z> + a_0'w  s.t.  sum_b <C_k, Z_b> + a_k'w = sign c_k,  Z_b ⪰ 0.
        # Its multipliers on the equations are x: stationarity in Z reads
        # svec(C_0 + sum_k x_k C_k) = cone multiplier ⪰ 0.
        import clarabel

        m = p.num_vars
        sign = 1.0 if p.sense == "min" else -1.0
        offsets, nz = [], 0
        for blk in p.psd_blocks:
            offsets.append(nz)
            nz += blk.size * (blk.size + 1) // 2
        w_off = nz
        nw = sum(e.size for e in p.equality_blocks)
        nu = nz + nw
        q = np.zeros(nu)
        rows, cols, vals = [], [], []
        for blk, off in zip(p.psd_blocks, offsets):
            for k in blk.coefs:
                for idx, v in _svec_rows(blk, k).items():
                    if k == 0:
                        q[off + idx] += v
                    else:
                        rows.append(k - 1)
                        cols.append(off + idx)
                        vals.append(v)
        col = w_off
        for e in p.equality_blocks:
            for row in e.rows:
                for k, v in row.items():
                    if k == 0:
                        q[col] += v
                    else:
                        rows.append(k - 1)
                        cols.append(col)
                        vals.append(v)
                col += 1
        A_eq = sp.csc_matrix((vals, (rows, cols)), shape=(m, nu))
        b_eq = np.array([sign * p.objective.get(k, 0.0) for k in range(1, m + 1)])
        # cone rows: -Z_b + s = 0, s in the PSD cone
        A_cone = -sp.eye(nz, nu, format="csc")
        A = sp.vstack([A_eq, A_cone], format="csc")
        b = np.concatenate([b_eq, np.zeros(nz)])
        cones = [clarabel.ZeroConeT(m)] if m else []
        cones += [self._cone(clarabel, blk.size) for blk in p.psd_blocks]
        solver = clarabel.DefaultSolver(sp.csc_matrix((nu, nu)), q, A, b, cones, self._settings(tol))
        sol = solver.solve()
        raw = str(sol.status)
        u = np.asarray(sol.x, dtype=float)
        z = np.asarray(sol.z, dtype=float)
        psd_duals = [_unsvec(u[off:], blk.size) for blk, off in zip(p.psd_blocks, offsets)]
        eq_duals, pos = [], w_off
        for e in p.equality_blocks:
            eq_duals.append(u[pos : pos + e.size].copy())
            pos += e.size
        # the roles of primal and dual swap in this orientation
        status = {"infeasible": "unbounded", "unbounded": "infeasible"}.get(
            _STATUS_MAP.get(raw, "numerical_failure"), _STATUS_MAP.get(raw, "numerical_failure")
        )
        return BackendResult(
            status=status,
            x=z[:m].copy(),
            psd_duals=psd_duals,
            eq_duals=eq_duals,
            iterations=int(sol.iterations),
            message=raw,
        )


_DEFAULT_BACKEND: SolverBackend = ClarabelBackend()


@dataclass
class SDPSolution:
    """Outcome of :func:`solve` with independently recomputed residuals.

    Attributes
    ----------
    status : str
        One of ``optimal``, ``near_optimal``, ``infeasible``, ``unbounded``,
        ``numerical_failure``.
    objective : float
        Primal objective ``c_0 + c^T x`` at the returned point.
    dual_objective : float
        Objective of the dual point (the certified bound for moment
        minimisations).
    x : ndarray
        Scalar variables.
    psd_duals, eq_duals : dict
        Dual matrices per PSD block and multipliers per equality block.
    residuals : dict
        ``primal``, ``dual`` (relative, solver-style scaling), ``gap``
        (relative), and their absolute counterparts.
    """

    status: str
    objective: float
    dual_objective: float
    x: np.ndarray
    psd_duals: dict[str, np.ndarray]
    eq_duals: dict[str, np.ndarray]
    residuals: dict[str, float]
    block_spectra: dict[str, list[float]] = field(default_factory=dict)
    backend: str = ""
    backend_status: str = ""
    iterations: int = 0
    solve_time: float = 0.0
    y: Any = None

    @property
    def bound(self) -> float:
        return self.objective

    def to_json(self) -> dict:
        def num(v):
            return v if v is None or math.isfinite(v) else str(v)

        return {
            "status": self.status,
            "objective": num(self.objective),
            "dual_objective": num(self.dual_objective),
            "residuals": {k: num(v) for k, v in self.residuals.items()},
            "block_spectra": self.block_spectra,
            "backend": self.backend,
            "backend_status": self.backend_status,
            "iterations": self.iterations,
        }


def residuals(p: SDPProblem, x: np.ndarray, psd_duals: Sequence[np.ndarray], eq_duals: Sequence[np.ndarray]) -> dict:
    """Primal/dual feasibility and duality gap of a primal-dual pair.

    Relative values divide by ``1 + max`` magnitude of the data and
    iterate involved, mirroring interior-point stopping rules.
    """
    sign = 1.0 if p.sense == "min" else -1.0
    xs = np.asarray(x, dtype=float)
    # primal: PSD violations and equation residuals
    pviol = 0.0
    data_scale = 0.0
    for blk in p.psd_blocks:
        M = blk.matrix(xs)
        if blk.size:
            pviol = max(pviol, -float(np.linalg.eigvalsh(M)[0]))
        data_scale = max(data_scale, float(np.max(np.abs(blk.coef_matrix(0)))) if blk.size else 0.0)
    for e in p.equality_blocks:
        if e.size:
            pviol = max(pviol, float(np.max(np.abs(e.values(xs)))))
            data_scale = max(data_scale, max((abs(r.get(0, 0.0)) for r in e.rows), default=0.0))
    pviol = max(pviol, 0.0)
    xnorm = float(np.max(np.abs(xs))) if xs.size else 0.0
    # dual: sum_b <C_k^b, Z_b> + sum_e a_k^e w_e = sign * c_k, Z_b ⪰ 0
    m = p.num_vars
    lhs = np.zeros(m)
    dviol = 0.0
    dual_const = 0.0
    znorm = 0.0
    for blk, Z in zip(p.psd_blocks, psd_duals):
        for k, ent in blk.coefs.items():
            acc = 0.0
            for (i, j), v in ent.items():
                acc += v * (Z[i, j] if i == j else 2.0 * Z[i, j])
            if k == 0:
                dual_const += acc
            else:
                lhs[k - 1] += acc
        if blk.size:
            dviol = max(dviol, -float(np.linalg.eigvalsh(Z)[0]))
            znorm = max(znorm, float(np.max(np.abs(Z))))
    for e, w in zip(p.equality_blocks, eq_duals):
        for row, wr in zip(e.rows, w):
            for k, v in row.items():
                if k == 0:
                    dual_const += v * wr
                else:
                    lhs[k - 1] += v * wr
        if len(w):
            znorm = max(znorm, float(np.max(np.abs(w))))
    c = np.array([sign * p.objective.get(k, 0.0) for k in range(1, m + 1)])
    eq_res = float(np.max(np.abs(lhs - c))) if m else 0.0
    dviol = max(dviol, 0.0, eq_res)
    c0 = p.objective.get(0, 0.0)
    pobj = p.objective_value(xs)
    dobj = sign * (-dual_const) + c0
    gap_abs = abs(pobj - dobj)
    cnorm = float(np.max(np.abs(c))) if m else 0.0
    return {
        "primal": pviol / (1.0 + max(data_scale, xnorm)),
        "dual": dviol / (1.0 + max(cnorm, znorm)),
        "gap": gap_abs / max(1.0, min(abs(pobj - c0), abs(dobj - c0))),
        "primal_abs": pviol,
        "dual_abs": dviol,
        "gap_abs": gap_abs,
        "primal_objective": pobj,
        "dual_objective": dobj,
    }


def solve(p: SDPProblem, tol: float = DEFAULT_TOL, backend: SolverBackend | None = None) -> SDPSolution:
    """Solve ``p`` through the backend adapter.

    The backend's own status is only a hint: ``optimal`` is reported when
    the backend converged (fully or approximately) and the recomputed
    relative primal/dual residuals and gap are all within ``10 * tol``,
    ``near_optimal`` when they are within ``1e-4`` and otherwise
    ``numerical_failure``.  Backend exceptions are caught and
    reported as ``numerical_failure``.
    """
    if not (1e-10 <= tol <= 1e-4):
        raise ValueError("tol must lie in [1e-10, 1e-4]")
    backend = backend or _DEFAULT_BACKEND
    t0 = time.perf_counter()
    try:
        res = backend.solve(p, tol)
    except Exception as exc:  # noqa: BLE001 - backend failures are data
        return SDPSolution(
            status="numerical_failure",
            objective=math.nan,
            dual_objective=math.nan,
            x=np.full(p.num_vars, math.nan),
            psd_duals={},
            eq_duals={},
            residuals={"primal": math.inf, "dual": math.inf, "gap": math.inf},
            backend=getattr(backend, "name", "?"),
            backend_status=f"exception: {exc}",
            solve_time=time.perf_counter() - t0,
        )
    elapsed = time.perf_counter() - t0
    x = res.x
    if res.status in ("infeasible", "unbounded") or not np.all(np.isfinite(x)):
        status = res.status if res.status in ("infeasible", "unbounded") else "numerical_failure"
        return SDPSolution(
            status=status,
            objective=math.inf if status == "infeasible" and p.sense == "min" else -math.inf if status == "infeasible" else math.nan,
            dual_objective=math.nan,
            x=x,
            psd_duals={b.name: Z for b, Z in zip(p.psd_blocks, res.psd_duals)},
            eq_duals={e.name: w for e, w in zip(p.equality_blocks, res.eq_duals)},
            residuals={"primal": math.nan, "dual": math.nan, "gap": math.nan},
            backend=backend.name,
            backend_status=res.message,
            iterations=res.iterations,
            solve_time=elapsed,
        )
    r = residuals(p, x, res.psd_duals, res.eq_duals)
    worst = max(r["primal"], r["dual"], r["gap"])
    if res.status in ("optimal", "near_optimal") and worst <= 10.0 * tol:
        status = "optimal"
    elif res.status in ("optimal", "near_optimal", "numerical_failure") and worst <= 1e-4:
        status = "near_optimal"
    else:
        status = "numerical_failure"
    spectra = {
        b.name: [float(v) for v in np.linalg.eigvalsh(b.matrix(x))] for b in p.psd_blocks if b.size
    }
    return SDPSolution(
        status=status,
        objective=r["primal_objective"],
        dual_objective=r["dual_objective"],
        x=x,
        psd_duals={b.name: Z for b, Z in zip(p.psd_blocks, res.psd_duals)},
        eq_duals={e.name: w for e, w in zip(p.equality_blocks, res.eq_duals)},
        residuals={k: v for k, v in r.items() if not k.endswith("objective")},
        block_spectra=spectra,
        backend=backend.name,
        backend_status=res.message,
        iterations=res.iterations,
        solve_time=elapsed,
    )


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------
def project_psd(Z: np.ndarray, floor: float = EIG_FLOOR) -> tuple[np.ndarray, float]:
    """Symmetrise and clip eigenvalues below ``floor`` to zero.

    Returns the projected matrix and the smallest eigenvalue before
    projection.
    """
    Z = 0.5 * (Z + Z.T)
    if Z.size == 0:
        return Z, 0.0
    w, V = np.linalg.eigh(Z)
    w_clip = np.where(w < floor, 0.0, w)
    return (V * w_clip) @ V.T, float(w[0])


@dataclass
class Certificate:
    """SOS certificate ``f - t = sigma + sum domain terms + sum <H1,P> + <H2,Q>``.

    Attributes
    ----------
    t : float
        Certified bound (in the units of the original objective).
    sigma_gram : ndarray
        Gram matrix of ``sigma`` on the moment basis.
    domain_grams : dict
        Gram matrices (or multipliers) of the domain constraints and of
        any Kronecker or scalar localizers.
    trace_grams : list of (H1, H2)
        One pair per trace-block group; ``H2`` may be empty.
    residual : float
        ``||f - t - (certificate)||_1`` over coefficients, after projection.
    """

    t: float
    sigma_gram: np.ndarray
    domain_grams: dict[str, np.ndarray]
    trace_grams: list[tuple[np.ndarray, np.ndarray]]
    residual: float
    min_eigs: dict[str, float] = field(default_factory=dict)

    @property
    def H1(self) -> np.ndarray | None:
        return self.trace_grams[0][0] if self.trace_grams else None

    @property
    def H2(self) -> np.ndarray | None:
        return self.trace_grams[0][1] if self.trace_grams else None

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "residual": self.residual,
            "sigma_gram": self.sigma_gram.tolist(),
            "domain_grams": {k: np.asarray(v).tolist() for k, v in self.domain_grams.items()},
            "trace_grams": [[H1.tolist(), H2.tolist()] for H1, H2 in self.trace_grams],
            "min_eigs_before_projection": self.min_eigs,
        }


def extract_certificate(p: SDPProblem, s: SDPSolution, floor: float = EIG_FLOOR) -> Certificate:
    """Recover Gram matrices and verify the polynomial identity.

    ``p`` must come from :func:`pmirelax.relax.build` (dual multipliers
    of the moment SDP are used) or :func:`pmirelax.relax.build_sos_dual`
    (Gram matrices are read from the primal variables).

    Raises
    ------
    CertificateError
        If the solution is not (near) optimal, the problem carries no
        polynomial data, or the reconstruction residual exceeds ``1e-5``.
    """
    from .poly import MultiPoly, polysum

    if s.status not in ("optimal", "near_optimal"):
        raise CertificateError(f"cannot certify a solution with status {s.status}")
    data = p.metadata.get("relaxation")
    if data is None:
        raise CertificateError("problem carries no relaxation data")
    form = p.metadata.get("form", "moment")
    grams: dict[str, np.ndarray] = {}
    multipliers: dict[str, np.ndarray] = {}
    if form == "moment":
        for b in p.psd_blocks:
            grams[b.name] = s.psd_duals[b.name]
        for e in p.equality_blocks:
            multipliers[e.name] = s.eq_duals[e.name]
        t_scaled = s.dual_objective
    else:
        layout = p.metadata["gram_layout"]
        for name, (size, index) in layout.items():
            Z = np.zeros((size, size))
            for (i, j), k in index.items():
                Z[i, j] = Z[j, i] = s.x[k - 1]
            grams[name] = Z
        for name, idx in p.metadata.get("multiplier_layout", {}).items():
            multipliers[name] = np.array([s.x[k - 1] for k in idx])
        t_scaled = s.x[p.metadata["t_index"] - 1]
    projected, min_eigs = {}, {}
    for name, Z in grams.items():
        projected[name], min_eigs[name] = project_psd(Z, floor)
    n = data.f.n
    parts = []
    for name, Z in projected.items():
        polys = data.block_polys[name]
        size = len(polys)
        for i in range(size):
            for j in range(size):
                if Z[i, j] != 0.0:
                    parts.append(polys[i][j].scale(Z[i, j]))
    for name, w in multipliers.items():
        for poly, wr in zip(data.equality_polys[name], w):
            parts.append(poly.scale(wr))
    recon = polysum(parts, n) + MultiPoly.constant(n, t_scaled)
    if data.binary:
        recon = recon.reduce_binary()
    resid = (data.f - recon).coef_norm() * data.objective_scale
    trace_grams = []
    for h1, h2 in data.trace_pairs:
        H1 = projected[h1]
        H2 = projected[h2] if h2 is not None else np.zeros((0, 0))
        trace_grams.append((H1, H2))
    sigma = projected.get(data.moment_block, np.zeros((0, 0)))
    domain = {k: v for k, v in projected.items() if k != data.moment_block and k not in {x for pr in data.trace_pairs for x in pr if x}}
    domain.update(multipliers)
    cert = Certificate(
        t=t_scaled * data.objective_scale,
        sigma_gram=sigma,
        domain_grams=domain,
        trace_grams=trace_grams,
        residual=resid,
        min_eigs=min_eigs,
    )
    if resid > CERT_REJECT:
        raise CertificateError(f"certificate residual {resid:.3e} exceeds {CERT_REJECT:g}")
    return cert
