"""Problem instances: JSON round-trip and seeded random generators."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .matpoly import SymPolyMatrix
from .poly import MultiPoly, monomial_basis

INSTANCE_KEYS = {"name", "n", "objective", "G", "domain", "blocks", "normalize"}


class InstanceError(ValueError):
    """Malformed instance data."""


@dataclass
class Instance:
    """``min f(x)`` subject to ``G(x) ⪰ 0`` on the cube or the unit ball.

    ``blocks`` optionally lists diagonal blocks (for ``BlockDiag``); when
    present and ``G`` is omitted, ``G`` is their block-diagonal assembly.
    """

    n: int
    objective: MultiPoly
    G: SymPolyMatrix | None
    domain: str
    blocks: tuple[SymPolyMatrix, ...] | None = None
    normalize: bool = False
    name: str = "instance"

    def __post_init__(self):
        if self.domain not in ("binary", "ball"):
            raise InstanceError(f"domain must be 'binary' or 'ball', got {self.domain!r}")
        if self.objective.n != self.n:
            raise InstanceError("objective has the wrong number of variables")
        if self.G is None and self.blocks:
            self.G = SymPolyMatrix.block_diag(self.blocks)
        if self.G is not None and self.G.n != self.n:
            raise InstanceError("G has the wrong number of variables")

    @property
    def m(self) -> int:
        return 0 if self.G is None else self.G.m

    def to_json(self) -> dict:
        out = {
            "name": self.name,
            "n": self.n,
            "objective": self.objective.to_json(),
            "G": None if self.G is None else self.G.to_json(),
            "domain": self.domain,
            "normalize": self.normalize,
        }
        if self.blocks:
            out["blocks"] = [B.to_json() for B in self.blocks]
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> "Instance":
        if not isinstance(data, Mapping):
            raise InstanceError("instance must be a JSON object")
        unknown = set(data) - INSTANCE_KEYS
        if unknown:
            raise InstanceError(f"unknown instance keys: {sorted(unknown)}")
        for key in ("n", "objective", "domain"):
            if key not in data:
                raise InstanceError(f"missing key {key!r}")
        try:
            f = MultiPoly.from_json(data["objective"])
            G = None if data.get("G") is None else SymPolyMatrix.from_json(data["G"])
            blocks = data.get("blocks")
            blocks = tuple(SymPolyMatrix.from_json(b) for b in blocks) if blocks else None
            return cls(
                n=int(data["n"]),
                objective=f,
                G=G,
                domain=data["domain"],
                blocks=blocks,
                normalize=bool(data.get("normalize", False)),
                name=str(data.get("name", "instance")),
            )
        except InstanceError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise InstanceError(str(exc)) from exc


def load_instance(path: str | Path) -> Instance:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InstanceError(f"cannot read {path}: {exc}") from exc
    inst = Instance.from_json(data)
    if inst.name == "instance":
        inst.name = Path(path).stem
    return inst


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(inst.to_json(), indent=2))


def random_poly(n: int, deg: int, rng: np.random.Generator, squarefree: bool = False) -> MultiPoly:
    """Coefficients uniform in ``[-1, 1]`` on every monomial of degree ``<= deg``."""
    basis = monomial_basis(n, deg, squarefree=squarefree)
    coefs = rng.uniform(-1.0, 1.0, len(basis))
    return MultiPoly(n, dict(zip(basis, coefs)))


def _random_sym(n: int, m: int, deg: int, rng, squarefree: bool) -> SymPolyMatrix:
    rows = [[None] * m for _ in range(m)]
    for i in range(m):
        for j in range(i, m):
            rows[i][j] = rows[j][i] = random_poly(n, deg, rng, squarefree)
    return SymPolyMatrix(rows)


def _shift_feasible(G: SymPolyMatrix, x0: np.ndarray, margin: float) -> SymPolyMatrix:
    # G + (margin - lambda_min(G(x0))) I has lambda_min = margin at x0
    lam = float(np.linalg.eigvalsh(G.eval(x0))[0])
    I = SymPolyMatrix.constant(G.n, np.eye(G.m))
    return SymPolyMatrix(
        [[G[i, j] + (I[i, j].scale(margin - lam)) for j in range(G.m)] for i in range(G.m)]
    )


def random_binary_instance(
    n: int, m: int, deg_G: int = 2, deg_f: int = 3, seed: int = 0, margin: float = 0.05
) -> Instance:
    """Random instance on ``{0,1}^n`` feasible at a random cube point.

    ``G`` is shifted so ``lambda_min(G(x0)) = margin`` at the chosen point
    and is normalised by its coefficient-norm scale when relaxed.
    """
    rng = np.random.default_rng(seed)
    f = random_poly(n, deg_f, rng)
    G = _random_sym(n, m, deg_G, rng, squarefree=False)
    x0 = rng.integers(0, 2, n).astype(float)
    G = _shift_feasible(G, x0, margin)
    return Instance(n, f, G, "binary", normalize=True, name=f"bin_n{n}_m{m}_s{seed}")


def random_ball_instance(
    n: int, m: int, deg_G: int = 2, deg_f: int = 2, seed: int = 0, margin: float = 0.05
) -> Instance:
    """Random instance on the unit ball feasible at a random point of norm ``<= 1/2``."""
    rng = np.random.default_rng(seed)
    f = random_poly(n, deg_f, rng)
    G = _random_sym(n, m, deg_G, rng, squarefree=False)
    x0 = rng.standard_normal(n)
    x0 *= rng.uniform(0.0, 0.5) / max(np.linalg.norm(x0), 1e-12)
    G = _shift_feasible(G, x0, margin)
    return Instance(n, f, G, "ball", normalize=True, name=f"ball_n{n}_m{m}_s{seed}")
