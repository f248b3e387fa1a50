import json
import math

import pytest

from pmirelax.cli import BENCH_COLUMNS, EXIT_INPUT, EXIT_OK, main, parse_r, read_csv
from pmirelax.instances import Instance, save_instance
from pmirelax.matpoly import SymPolyMatrix
from pmirelax.penalty import choose_k
from pmirelax.sdp import read_sdpa

from conftest import var


@pytest.fixture
def toy_path(tmp_path):
    x = var(1, 0)
    path = tmp_path / "toy.json"
    save_instance(Instance(1, x, SymPolyMatrix([[2 * x - 1]]), "binary", name="toy"), path)
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_r():
    assert parse_r("3") == [3]
    assert parse_r("1..4") == [1, 2, 3, 4]
    assert parse_r("2,3,4") == [2, 3, 4]
    assert parse_r(5) == [5]


def test_relax_single(toy_path, tmp_path, capsys):
    code, out, _ = run(capsys, "relax", "--instance", toy_path, "--r", "3", "--out", tmp_path / "o")
    assert code == EXIT_OK
    meta = json.loads((tmp_path / "o" / "toy_ProposedBinary_r3.json").read_text())
    sizes = {b["block"]: b["size"] for b in meta["size_report"]["blocks"]}
    assert sizes == {"M": 2, "P": 2, "Q": 1}
    assert meta["v_star"] == 1 and meta["kind"] == "ProposedBinary"
    assert {"artifact_version", "config_hash", "provenance"} <= set(meta)
    p = read_sdpa(tmp_path / "o" / "toy_ProposedBinary_r3.dat-s")
    assert [b.size for b in p.psd_blocks] == [2, 2, 1]


def test_relax_range_deterministic(toy_path, tmp_path, capsys):
    for sub in ("a", "b"):
        code, out, _ = run(capsys, "relax", "--instance", toy_path, "--r", "1..4", "--out", tmp_path / sub)
        assert code == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "a").glob("*.dat-s"))
    assert names == [f"toy_ProposedBinary_r{r}.dat-s" for r in (1, 2, 3, 4)]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_invalid_instance_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{ nope")
    code, _, err = run(capsys, "relax", "--instance", bad, "--out", tmp_path)
    assert code == EXIT_INPUT == 2
    assert json.loads(err)["error"]["code"] == "INSTANCE_PARSE"


def test_solve_toy(toy_path, capsys):
    code, out, _ = run(capsys, "solve", "--instance", toy_path, "--r", "3", "--kind", "both", "--certify")
    assert code == EXIT_OK
    doc = json.loads(out)
    kinds = [r["kind"] for r in doc["results"]]
    assert kinds == ["ProposedBinary", "HolScherer"]
    for r in doc["results"]:
        assert r["bound"] <= 1 + 1e-6
        assert r["certificate"]["residual"] <= 1e-5
        assert {"status", "residuals", "block_spectra"} <= set(r["solution"])


def test_solve_writes_file(toy_path, tmp_path, capsys):
    code, _, _ = run(capsys, "solve", "--instance", toy_path, "--out", tmp_path / "res.json")
    assert code == EXIT_OK
    assert json.loads((tmp_path / "res.json").read_text())["instance"] == "toy"


def test_relaxation_error_exit(toy_path, capsys):
    x = var(1, 0)
    code, _, err = run(capsys, "solve", "--instance", toy_path, "--r", "0")
    assert code == EXIT_INPUT
    assert json.loads(err)["error"]["code"] == "BAD_ARGUMENT"


def test_config_precedence(toy_path, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"instance": str(toy_path), "r": "2", "kind": "holscherer"}))
    code, out, _ = run(capsys, "solve", "--config", cfg)
    res = json.loads(out)["results"]
    assert [(r["kind"], r["r"]) for r in res] == [("HolScherer", 2)]
    code, out, _ = run(capsys, "solve", "--config", cfg, "--r", "3")
    assert [r["r"] for r in json.loads(out)["results"]] == [3]


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"rr": 3}))
    code, _, err = run(capsys, "solve", "--config", cfg)
    assert code == EXIT_INPUT
    assert json.loads(err)["error"]["code"] == "CONFIG_PARSE"


def test_bench_suite(tmp_path, capsys):
    out = tmp_path / "bench.csv"
    code, _, _ = run(capsys, "bench", "--suite", 10, "--r", "2..4", "--kind", "both", "--out", out)
    assert code == EXIT_OK
    rows = read_csv(out)
    assert len(rows) == 60
    assert list(rows[0]) == list(BENCH_COLUMNS)
    assert out.read_text().startswith("# pmirelax")
    by_key = {(r["instance"], r["kind"], r["r"]): r for r in rows}
    for r in rows:
        assert r["status"] in ("optimal", "near_optimal")
        # solver noise at the default tolerance is far below 1e-6
        assert float(r["gap"]) >= -1e-6
        if r["kind"] == "ProposedBinary" and int(r["m"]) >= 2:
            hs = by_key[(r["instance"], "HolScherer", r["r"])]
            assert int(r["largest_block"]) < int(hs["largest_block"])


def test_bench_records_failures(toy_path, tmp_path, capsys):
    out = tmp_path / "b.csv"
    code, _, _ = run(capsys, "bench", "--instance", toy_path, "--r", "1,3", "--out", out)
    assert code == EXIT_OK
    rows = read_csv(out)
    assert len(rows) == 2
    assert rows[1]["status"] == "optimal"


def test_penalty_csv(tmp_path, capsys):
    code, out, _ = run(capsys, "penalty", "--lam", -0.5, "--N", 1, "--v", 40, "--out", tmp_path)
    assert code == EXIT_OK
    info = json.loads(out)
    rows = read_csv(info["csv"])
    assert len(rows) == 10_000
    side = json.loads((tmp_path / "penalty_lam-0.5_N1_v40.json").read_text())
    err = max(float(r["error"]) for r in rows)
    assert err <= side["jackson_bound"]
    assert min(float(r["error"]) for r in rows) >= -1e-10
    assert {int(r["k"]) for r in rows} == {choose_k(0.5, 40)}


def test_penalty_bad_spec(tmp_path, capsys):
    code, _, err = run(capsys, "penalty", "--lam", 0.5, "--v", 10, "--out", tmp_path)
    assert code == EXIT_INPUT
    assert json.loads(err)["error"]["code"] == "PENALTY_SPEC"


def test_oracle_command(toy_path, capsys):
    code, out, _ = run(capsys, "oracle", "--instance", toy_path, "--v", 2, "--r", 3)
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["result"]["f_min"] == 1.0
    assert doc["result"]["lambda_gap"] == -1.0
    assert "r_over_n" in doc["hypotheses"]
    assert math.isfinite(doc["rate_bounds"]["V_bound"])
