from __future__ import annotations

import json
from typing import Any, Dict, List

import numpy as np
import pytest

from app.adapters.artifact_file import FileArtifactSink, render_json
from app.adapters.result_cache_memory import InMemoryResultCache
from app.adapters.table_source_file import FileTableSource
from app.domain.errors import UsageError
from app.application.services import sweeps
from app.domain.modulus import REstimate
from app.entrypoints.cli.rotnum import CSV_SCHEMAS, EXIT_VIOLATION, CliDeps, GridSpec, parse_config, run


class RecordingSink:
    def __init__(self):
        self.csv: Dict[str, Any] = {}
        self.json: Dict[str, Any] = {}
        self.text: Dict[str, str] = {}

    def write_csv(self, path, header, rows):
        self.csv[path] = (list(header), [list(r) for r in rows])

    def write_json(self, path, doc):
        self.json[path] = doc

    def write_text(self, path, text):
        self.text[path] = text


@pytest.fixture
def sink():
    return RecordingSink()


@pytest.fixture
def deps(sink):
    return CliDeps(sink=sink, cache=InMemoryResultCache(), table_source=lambda p: FileTableSource(path=p))


def _parse(*argv: str):
    return parse_config(list(argv))


# ===== grid =====

def test_grid_includes_integral_max():
    assert GridSpec.parse("0:1:0.25").points().tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]


def test_grid_drops_max_off_lattice():
    pts = GridSpec.parse("0:1:0.3").points()
    assert pts.size == 4
    assert pts[-1] == pytest.approx(0.9)


@pytest.mark.parametrize("bad", ["0:1:0", "1:0:0.1", "0:1", "a:b:c", "0:1:-0.5"])
def test_grid_rejects(bad):
    with pytest.raises(UsageError):
        GridSpec.parse(bad)


# ===== parse_config =====

def test_negative_grid_is_joined():
    cfg = _parse("rotnum", "--family", "rigid", "--grid", "-1:0:0.5", "--n", "100")
    assert cfg.grid.min == -1.0
    assert cfg.grid.points().tolist() == [-1.0, -0.5, 0.0]


def test_repeated_flag_is_rejected():
    with pytest.raises(UsageError) as err:
        _parse("rotnum", "--family", "rigid", "--grid", "0:1:0.5", "--n", "100", "--n", "200")
    assert err.value.token == "--n"


def test_family_and_model_are_exclusive():
    with pytest.raises(UsageError):
        _parse("rotnum", "--family", "rigid", "--model", "free", "--grid", "0:1:0.5")


def test_missing_family_names_the_flag():
    with pytest.raises(UsageError) as err:
        _parse("rotnum", "--grid", "0:1:0.5")
    assert err.value.token == "--family"


def test_lemmas_need_pair():
    with pytest.raises(UsageError):
        _parse("lemmas", "--family", "rigid", "--a", "0.0")


def test_positive_n():
    with pytest.raises(UsageError) as err:
        _parse("rotnum", "--family", "rigid", "--grid", "0:1:0.5", "--n", "0")
    assert err.value.token == "--n"


@pytest.mark.parametrize("bad", ["1e19", "nan", "inf"])
def test_x0_must_stay_in_float_range(bad):
    with pytest.raises(UsageError) as err:
        _parse("rotnum", "--family", "rigid", "--grid", "0:1:0.5", "--x0", bad)
    assert err.value.token == "--x0"


def test_config_file_with_flag_override(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"family": "rigid", "grid": "0:1:0.5", "n": 200}), encoding="utf-8")
    cfg = _parse("rotnum", "--config", str(path), "--n", "300")
    assert cfg.family == "rigid"
    assert cfg.n == 300
    assert cfg.grid.step == 0.5


def test_config_file_unknown_key(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"family": "rigid", "bogus": 1}), encoding="utf-8")
    with pytest.raises(UsageError) as err:
        _parse("rotnum", "--config", str(path))
    assert err.value.token == "bogus"


def test_out_directory_must_exist(tmp_path):
    with pytest.raises(UsageError):
        _parse("rotnum", "--family", "rigid", "--grid", "0:1:0.5", "--out", str(tmp_path / "no" / "x.csv"))


def test_help_lists_csv_columns(capsys):
    with pytest.raises(SystemExit) as exc:
        _parse("--help")
    assert exc.value.code == 0
    assert "a,rho,error_radius,n,seed" in capsys.readouterr().out


# ===== run =====

def test_rotnum_csv(deps, sink):
    cfg = _parse("rotnum", "--family", "rigid", "--grid", "0:1:0.25", "--n", "1000", "--seed", "3", "--threads", "1")
    assert run(cfg, deps) == 0
    header, rows = sink.csv["-"]
    assert header == CSV_SCHEMAS["rotnum"]
    assert [r[0] for r in rows] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert np.allclose([r[1] for r in rows], [r[0] for r in rows], atol=1e-10)
    assert all(r[3] == 1000 and r[4] == 3 for r in rows)


def test_rotnum_json_embeds_config(deps, sink):
    cfg = _parse("rotnum", "--family", "rigid", "--grid", "0:1:0.25", "--n", "200", "--format", "json")
    assert run(cfg, deps) == 0
    doc = sink.json["-"]
    assert doc["config"]["grid"] == "0.0:1.0:0.25"
    assert doc["config"]["family"] == "rigid"
    assert len(doc["points"]) == 5


def test_tabulated_family_from_table(deps, sink):
    cfg = _parse(
        "rotnum", "--family", "tabulated", "--table", "data/tables/sine_kappa01.txt",
        "--grid", "0:1:0.5", "--n", "1000",
    )
    assert run(cfg, deps) == 0
    _, rows = sink.csv["-"]
    assert [r[1] for r in rows] == pytest.approx([0.0, 0.5, 1.0], abs=1e-12)


def test_ids_csv(deps, sink):
    cfg = _parse("ids", "--model", "free", "--grid", "-1:1:0.5", "--n", "200", "--method", "both")
    assert run(cfg, deps) == 0
    header, rows = sink.csv["-"]
    assert header == CSV_SCHEMAS["ids"]
    assert {r[2] for r in rows} == {"eigencount", "rotation"}
    assert len(rows) == 10


def test_compare_csv(deps, sink):
    cfg = _parse("compare", "--model", "anderson-bernoulli", "--grid", "-2:3:0.5", "--n", "300", "--seeds", "2")
    assert run(cfg, deps) == 0
    header, rows = sink.csv["-"]
    assert header == CSV_SCHEMAS["compare"]
    assert {r[4] for r in rows} == {0, 1}
    assert all(r[3] == pytest.approx(abs(r[1] - r[2])) for r in rows)


def test_modulus_writes_summary_next_to_output(deps, sink, tmp_path):
    out = str(tmp_path / "cert.csv")
    cfg = _parse("modulus", "--family", "rigid", "--grid", "0:1:0.01", "--n", "1000", "--out", out)
    assert run(cfg, deps) == 0
    header, rows = sink.csv[out]
    assert header == CSV_SCHEMAS["modulus"]
    assert rows[0][5] is True and rows[0][6] is True
    assert "verdict: certified" in sink.text[str(tmp_path / "cert.txt")]


def test_craig_simon_json(deps, sink, capsys):
    cfg = _parse("craig-simon", "--model", "free", "--grid", "-1:1:0.05", "--n", "1000", "--format", "json")
    assert run(cfg, deps) == 0
    doc = sink.json["-"]
    assert doc["verdict"] == "certified"
    assert doc["quantity"] == "ids"
    assert "verdict: certified" in capsys.readouterr().err


def test_lemmas_exit_status(deps, sink):
    cfg = _parse("lemmas", "--family", "rigid", "--a", "0", "--a2", "0.05", "--n", "400", "--seeds", "2")
    assert run(cfg, deps) == 0
    header, rows = sink.csv["-"]
    assert header == CSV_SCHEMAS["lemmas"]
    assert [r[2] for r in rows] == [0, 1]
    assert all(r[5] == "pass" for r in rows)


def test_domain_errors_exit_one(deps, capsys):
    cfg = _parse("ids", "--model", "lloyd", "--grid", "-1:1:0.5", "--n", "200", "--method", "rotation")
    assert run(cfg, deps) == 1
    assert "E_ref" in capsys.readouterr().err


def test_hypothesis_violation_exits_one(deps):
    cfg = _parse("lemmas", "--family", "rigid", "--a", "0", "--a2", "0.5", "--n", "400")
    assert run(cfg, deps) == 1


def test_main_writes_file(tmp_path):
    from app.main import main

    out = tmp_path / "rho.csv"
    code = main(["rotnum", "--family", "rigid", "--grid", "0:0.5:0.25", "--n", "200", "--out", str(out)])
    assert code == 0
    header, rows = FileArtifactSink().read_csv(str(out))
    assert header == CSV_SCHEMAS["rotnum"]
    assert [float(r[0]) for r in rows] == [0.0, 0.25, 0.5]


def test_main_usage_error_exits_one(capsys):
    from app.main import main

    assert main(["rotnum", "--grid", "0:1:0.5"]) == 1
    assert "--family" in capsys.readouterr().err


# ===== 재현성 / 종료 코드 =====

def _file_deps():
    return CliDeps(sink=FileArtifactSink(), cache=InMemoryResultCache(), table_source=lambda p: FileTableSource(path=p))


def test_csv_output_is_byte_identical_across_runs_and_threads(tmp_path):
    out = str(tmp_path / "rho.csv")
    blobs = []
    for threads in ("1", "3", "1"):
        cfg = _parse("rotnum", "--family", "sine-perturbed", "--grid", "0:1:0.05", "--n", "2000",
                     "--threads", threads, "--out", out)
        assert run(cfg, _file_deps()) == 0
        blobs.append((tmp_path / "rho.csv").read_bytes())
    assert blobs[0] == blobs[1] == blobs[2]


def test_json_output_is_byte_identical_and_canonical(tmp_path):
    out = str(tmp_path / "cert.json")
    blobs = []
    for _ in range(2):
        cfg = _parse("modulus", "--family", "rigid", "--grid", "0:1:0.01", "--n", "1000",
                     "--format", "json", "--out", out)
        assert run(cfg, _file_deps()) == 0
        blobs.append((tmp_path / "cert.json").read_bytes())
    assert blobs[0] == blobs[1]
    doc = FileArtifactSink().read_json(out)
    assert doc["verdict"] == "certified"
    assert render_json(doc).encode("utf-8") == blobs[0]


def test_violated_certificate_exits_two(deps, sink, monkeypatch, tmp_path):
    monkeypatch.setattr(sweeps, "r_estimate", lambda family, omega0, n: REstimate(value=0.001, allowance=0.0, n=n))
    out = str(tmp_path / "cert.csv")
    cfg = _parse("modulus", "--family", "rigid", "--grid", "0:1:0.01", "--n", "1000", "--out", out)
    assert run(cfg, deps) == EXIT_VIOLATION == 2
    _, rows = sink.csv[out]
    assert any(r[5] is True and r[6] is False for r in rows)
    assert "verdict: violated" in sink.text[str(tmp_path / "cert.txt")]
