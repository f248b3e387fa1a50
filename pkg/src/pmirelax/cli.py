"""Command-line front end.

Subcommands
-----------
relax    build relaxations and write SDPA files plus metadata JSON
solve    solve relaxations and print the bounds as JSON
bench    sweep instances, kinds and orders into a CSV table
penalty  tabulate the penalty approximant on [-1, 1]
oracle   brute-force (cube) or sampled (ball) minimum of an instance

Exit codes: 0 when the run completed (a solver failure is reported as
data), 2 for bad input, 3 for an internal error.  Errors are printed to
stderr as ``{"error": {"code": ..., "message": ...}}``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .instances import Instance, InstanceError, load_instance, random_binary_instance
from .matpoly import normalize
from .oracle import OracleError, brute_force_binary, check_hypotheses, rate_bounds, sample_min_ball
from .penalty import PenaltySpec, choose_k, jackson_error_bound, penalty_poly, q_eval
from .relax import (
    BLOCK_DIAG,
    HOL_SCHERER,
    PROPOSED_BALL,
    PROPOSED_BINARY,
    SCALAR_LASSERRE,
    RelaxationError,
    RelaxSpec,
    build,
    localizing_blocks,
    size_report,
    solve_relaxation,
)
from .sdp import export_sdpa

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 2, 3

BENCH_COLUMNS = (
    "instance", "kind", "r", "m", "largest_block", "total_vars",
    "bound", "oracle_fmin", "gap", "status", "wall_time",
)
PENALTY_GRID = 10_000

# keys accepted in --config files; each mirrors a command-line flag
CONFIG_KEYS = {
    "instance", "instances", "kind", "r", "v", "k", "lam", "N", "shift_mode", "tol",
    "seed", "out", "certify", "explicit_equalities", "samples", "suite",
}
_DEFAULTS = {
    "kind": "proposed", "r": "3", "tol": 1e-8, "seed": 0, "certify": False,
    "explicit_equalities": False, "shift_mode": "theoretical", "N": 1.0, "samples": 100_000,
}


class InputError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# configuration

def parse_r(spec) -> list[int]:
    """``"3"``, ``"1..4"`` or ``"2,3,4"`` (or an int / list) to a list of orders."""
    try:
        if isinstance(spec, int):
            out = [spec]
        elif isinstance(spec, (list, tuple)):
            out = [int(v) for v in spec]
        elif ".." in str(spec):
            lo, hi = str(spec).split("..")
            out = list(range(int(lo), int(hi) + 1))
        else:
            out = [int(v) for v in str(spec).split(",")]
    except ValueError as exc:
        raise InputError("BAD_ARGUMENT", f"cannot parse r={spec!r}") from exc
    if not out or min(out) < 1:
        raise InputError("BAD_ARGUMENT", f"orders must be positive, got {spec!r}")
    return out


def resolve_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(_DEFAULTS)
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError("CONFIG_PARSE", f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise InputError("CONFIG_PARSE", "config must be a JSON object")
        unknown = set(data) - CONFIG_KEYS
        if unknown:
            raise InputError("CONFIG_PARSE", f"unknown config keys: {sorted(unknown)}")
        cfg.update(data)
    for key in CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None and val is not False:
            cfg[key] = val
    return cfg


def config_hash(cfg: dict) -> str:
    keep = {k: v for k, v in cfg.items() if k != "out"}
    return hashlib.sha256(json.dumps(keep, sort_keys=True, default=str).encode()).hexdigest()[:16]


def metadata(command: str, cfg: dict, provenance: dict | None = None) -> dict:
    return {
        "artifact_version": __version__,
        "command": command,
        "config_hash": config_hash(cfg),
        "config": {k: v for k, v in cfg.items()},
        "provenance": provenance or {},
    }


def _load(cfg: dict) -> Instance:
    path = cfg.get("instance")
    if not path:
        raise InputError("MISSING_ARGUMENT", "--instance is required")
    try:
        return load_instance(path)
    except InstanceError as exc:
        raise InputError("INSTANCE_PARSE", str(exc)) from exc


def kinds_for(kind: str, inst: Instance) -> list[str]:
    proposed = PROPOSED_BINARY if inst.domain == "binary" else PROPOSED_BALL
    table = {
        "proposed": [proposed],
        "holscherer": [HOL_SCHERER],
        "scalar": [SCALAR_LASSERRE],
        "blockdiag": [BLOCK_DIAG],
        "both": [proposed, HOL_SCHERER],
    }
    if kind not in table:
        raise InputError("BAD_ARGUMENT", f"unknown kind {kind!r}; choose from {sorted(table)}")
    return table[kind]


def make_spec(kind: str, r: int, inst: Instance, explicit: bool) -> RelaxSpec:
    try:
        return RelaxSpec(
            kind, r, blocks=inst.blocks if kind == BLOCK_DIAG else None,
            domain=inst.domain, explicit_equalities=explicit and inst.domain == "binary",
        )
    except RelaxationError as exc:
        raise InputError("BAD_ARGUMENT", str(exc)) from exc


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _finite(v):
    return v if isinstance(v, (int, float)) and math.isfinite(v) else str(v)


# ---------------------------------------------------------------------------
# commands

def cmd_relax(cfg: dict) -> int:
    inst = _load(cfg)
    out = Path(cfg.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for kind in kinds_for(cfg["kind"], inst):
        for r in parse_r(cfg["r"]):
            spec = make_spec(kind, r, inst, cfg["explicit_equalities"])
            try:
                p = build(inst.objective, inst.G, spec, auto_normalize=inst.normalize)
            except RelaxationError as exc:
                raise InputError("RELAXATION", str(exc)) from exc
            stem = f"{inst.name}_{kind}_r{r}"
            export_sdpa(p, out / f"{stem}.dat-s")
            meta = metadata("relax", cfg)
            meta.update(p.metadata["relaxation"].metadata_json())
            meta["size_report"] = size_report(p)
            _write_json(out / f"{stem}.json", meta)
            written.append(stem)
    print(json.dumps({"written": written, "out": str(out)}))
    return EXIT_OK


def cmd_solve(cfg: dict) -> int:
    inst = _load(cfg)
    results = []
    for kind in kinds_for(cfg["kind"], inst):
        for r in parse_r(cfg["r"]):
            spec = make_spec(kind, r, inst, cfg["explicit_equalities"])
            try:
                res = solve_relaxation(
                    inst.objective, inst.G, spec, tol=float(cfg["tol"]),
                    auto_normalize=inst.normalize, certify=bool(cfg["certify"]),
                )
                results.append(res.to_json())
            except RelaxationError as exc:
                raise InputError("RELAXATION", str(exc)) from exc
            except Exception as exc:  # certificate rejection etc. is data, not a crash
                results.append({"kind": kind, "r": r, "status": "error", "error": str(exc)})
    doc = {"metadata": metadata("solve", cfg), "instance": inst.name, "results": results}
    text = json.dumps(doc, indent=2, default=_json_default)
    if cfg.get("out"):
        out = Path(cfg["out"])
        if out.suffix != ".json":
            out = out / f"{inst.name}_solve.json"
        _write_json(out, doc)
    print(text)
    return EXIT_OK


def oracle_for(inst: Instance, samples: int, seed: int):
    if inst.domain == "binary":
        return brute_force_binary(inst.objective, inst.G)
    return sample_min_ball(inst.objective, inst.G, samples=samples, seed=seed)


def bench_rows(instances: Sequence[Instance], kinds: str, orders: Sequence[int], cfg: dict) -> list[dict]:
    """One row per (instance, kind, r); failures become rows with status ``error``."""
    rows = []
    for inst in instances:
        try:
            orc = oracle_for(inst, int(cfg["samples"]), int(cfg["seed"]))
            fmin = orc.f_min
        except OracleError as exc:
            fmin = math.nan
            warnings.warn(f"{inst.name}: oracle failed: {exc}", RuntimeWarning, stacklevel=2)
        for kind in kinds_for(kinds, inst):
            for r in orders:
                row = dict.fromkeys(BENCH_COLUMNS, "")
                row.update(instance=inst.name, kind=kind, r=r, m=inst.m, oracle_fmin=fmin)
                t0 = time.perf_counter()
                try:
                    spec = make_spec(kind, r, inst, cfg["explicit_equalities"])
                    res = solve_relaxation(
                        inst.objective, inst.G, spec, tol=float(cfg["tol"]),
                        auto_normalize=inst.normalize,
                    )
                    rep = size_report(res.problem)
                    loc = localizing_blocks(res.problem)
                    row.update(
                        largest_block=max((s for _, s in loc), default=0),
                        total_vars=rep["total_variables"],
                        bound=res.bound,
                        gap=fmin - res.bound,
                        status=res.status,
                    )
                except Exception as exc:  # recorded, the sweep continues
                    row.update(status=f"error: {type(exc).__name__}: {exc}")
                row["wall_time"] = round(time.perf_counter() - t0, 4)
                rows.append(row)
    return rows


def _csv_header(fh, meta: dict) -> None:
    fh.write(f"# pmirelax {meta['artifact_version']} {meta['command']} config_hash={meta['config_hash']}\n")
    fh.write(f"# provenance={json.dumps(meta['provenance'], sort_keys=True)}\n")


def read_csv(path: str | Path) -> list[dict]:
    """Read a CSV written by this module, skipping ``#`` metadata lines."""
    with open(path, newline="") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def cmd_bench(cfg: dict) -> int:
    instances: list[Instance] = []
    paths = list(cfg.get("instances") or [])
    if cfg.get("instance"):
        paths.insert(0, cfg["instance"])
    for path in paths:
        try:
            instances.append(load_instance(path))
        except InstanceError as exc:
            raise InputError("INSTANCE_PARSE", f"{path}: {exc}") from exc
    suite = int(cfg.get("suite") or 0)
    rng = np.random.default_rng(int(cfg["seed"]))
    for s in range(suite):
        n, m = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        instances.append(random_binary_instance(n, m, seed=int(cfg["seed"]) * 1000 + s))
    if not instances:
        raise InputError("MISSING_ARGUMENT", "bench needs --instance, --instances or --suite")
    rows = bench_rows(instances, cfg["kind"], parse_r(cfg["r"]), cfg)
    meta = metadata("bench", cfg)
    out = Path(cfg.get("out") or "bench.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        _csv_header(fh, meta)
        w = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: _finite(v) if isinstance(v, float) else v for k, v in row.items()})
    print(json.dumps({"rows": len(rows), "out": str(out)}))
    return EXIT_OK


def cmd_penalty(cfg: dict) -> int:
    if cfg.get("lam") is None or cfg.get("v") is None:
        raise InputError("MISSING_ARGUMENT", "penalty needs --lam and --v")
    lam, v, N = float(cfg["lam"]), int(cfg["v"]), float(cfg["N"])
    try:
        k = int(cfg["k"]) if cfg.get("k") is not None else choose_k(abs(lam), v)
        spec = PenaltySpec(lam, N, k, v)
        pen = penalty_poly(spec, cfg["shift_mode"])
    except ValueError as exc:
        raise InputError("PENALTY_SPEC", str(exc)) from exc
    t = np.linspace(-1.0, 1.0, PENALTY_GRID)
    q = q_eval(spec, t)
    p = pen(t)
    prov = {"k": "user" if cfg.get("k") is not None else "choose_k"}
    meta = metadata("penalty", cfg, prov)
    out = Path(cfg.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    stem = f"penalty_lam{lam:g}_N{N:g}_v{v}"
    with open(out / f"{stem}.csv", "w", newline="") as fh:
        _csv_header(fh, meta)
        w = csv.writer(fh)
        w.writerow(["t", "q", "p", "error", "k"])
        for row in zip(t, q, p, p - q):
            w.writerow([repr(float(x)) for x in row] + [k])
    side = {"metadata": meta, **pen.to_json(), "grid_max_error": float(np.max(p - q)),
            "jackson_bound": jackson_error_bound(spec)}
    _write_json(out / f"{stem}.json", side)
    print(json.dumps({"csv": str(out / f"{stem}.csv"), "k": k, "shift": pen.shift}))
    return EXIT_OK


def cmd_oracle(cfg: dict) -> int:
    inst = _load(cfg)
    try:
        res = oracle_for(inst, int(cfg["samples"]), int(cfg["seed"]))
    except OracleError as exc:
        raise InputError("ORACLE", str(exc)) from exc
    doc = {"metadata": metadata("oracle", cfg), "instance": inst.name, "result": res.to_json()}
    if cfg.get("v") is not None and inst.G is not None:
        r = parse_r(cfg["r"])[-1]
        params = {"n": inst.n, "m": inst.m, "d": inst.objective.degree(), "l": inst.G.l,
                  "r": r, "v": int(cfg["v"]), "f_norm": inst.objective.coef_norm()}
        doc["hypotheses"] = check_hypotheses(inst.domain, params)
        if inst.domain == "binary" and res.lambda_gap is not None:
            # the bounds refer to the normalised matrix, whose eigenvalues scale by 1/scale
            lam = res.lambda_gap / normalize(inst.G, "binary")[1] if inst.normalize else res.lambda_gap
            doc["lambda_gap_normalized"] = lam
            doc["rate_bounds"] = rate_bounds("binary", {**params, "lam": max(lam, -1.0)}).to_json()
    text = json.dumps(doc, indent=2, default=_json_default)
    if cfg.get("out"):
        out = Path(cfg["out"])
        _write_json(out if out.suffix == ".json" else out / f"{inst.name}_oracle.json", doc)
    print(text)
    return EXIT_OK


COMMANDS = {
    "relax": cmd_relax, "solve": cmd_solve, "bench": cmd_bench,
    "penalty": cmd_penalty, "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pmirelax", description="Moment relaxations under G(x) ⪰ 0.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=COMMANDS[name].__name__.replace("cmd_", ""))
        sp.add_argument("--config", help="JSON file with the same keys as the flags")
        sp.add_argument("--instance", help="instance JSON file")
        sp.add_argument("--instances", nargs="+", help="further instance files (bench)")
        sp.add_argument("--suite", type=int, help="number of seeded random binary instances (bench)")
        sp.add_argument("--kind", help="proposed | holscherer | scalar | blockdiag | both")
        sp.add_argument("--r", help="order: 3, 1..4 or 2,3,4")
        sp.add_argument("--v", type=int, help="penalty degree")
        sp.add_argument("--k", type=int, help="smoothness order (default: choose_k)")
        sp.add_argument("--lam", type=float, help="penalty breakpoint in [-1, 0)")
        sp.add_argument("--N", type=float, help="penalty plateau height")
        sp.add_argument("--shift-mode", dest="shift_mode", choices=("theoretical", "empirical"))
        sp.add_argument("--tol", type=float, help="solver tolerance")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--samples", type=int, help="ball oracle sample count")
        sp.add_argument("--out", help="output file or directory")
        sp.add_argument("--certify", action="store_true", default=None)
        sp.add_argument("--explicit-equalities", dest="explicit_equalities", action="store_true", default=None)
    return parser


def _fail(code: str, message: str, status: int) -> int:
    print(json.dumps({"error": {"code": code, "message": message}}), file=sys.stderr)
    return status


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        cfg = resolve_config(args)
        cfg["r"] = cfg["r"] if isinstance(cfg["r"], (int, list)) else str(cfg["r"])
        return COMMANDS[args.command](cfg)
    except InputError as exc:
        return _fail(exc.code, str(exc), EXIT_INPUT)
    except Exception as exc:  # noqa: BLE001 - harness failure, reported not raised
        return _fail("INTERNAL", f"{type(exc).__name__}: {exc}", EXIT_INTERNAL)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
