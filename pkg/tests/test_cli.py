import json
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

from sweepmorse.cli import main
from sweepmorse.io import write_native_mesh
from sweepmorse.pipeline import (
    ConfigError,
    boundary_doc,
    config_from_dict,
    level_targets,
    load_config,
    parse_starts,
    verify_manifest,
)
from sweepmorse.report import render_summary
from sweepmorse.sweepgen import generate_box

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_generate_solve_classify_box(tmp_path, capsys):
    m, b, f = tmp_path / "box.vtk", tmp_path / "box.boundary.json", tmp_path / "f.txt"
    assert main(["generate", "--kind", "box", "-n", "4", "-o", str(m)]) == 0
    assert b.is_file()
    assert main(["solve", "--mesh", str(m), "--boundary", str(b), "--weights", "uniform",
                 "-o", str(f), "--vtk", str(tmp_path / "fv.vtk")]) == 0
    out = tmp_path / "c.json"
    assert main(["classify", "--mesh", str(m), "--field", str(f), "-o", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["interior"] == [] and sum(rep["counts"].values()) == 0
    assert "no interior critical points" in capsys.readouterr().out
    # a field stored inside a VTK file works too
    assert main(["classify", "--mesh", str(tmp_path / "fv.vtk")]) == 0


def test_missing_mesh_is_input_error(tmp_path, capsys):
    assert main(["classify", "--mesh", str(tmp_path / "nope.txt"), "--field", "x"]) == 2
    assert "stage=input" in capsys.readouterr().err
    cfg = tmp_path / "c.ini"
    cfg.write_text(f"[mesh]\nkind = file\npath = {tmp_path / 'nope.txt'}\nboundary = b.json\n")
    assert main(["pipeline", str(cfg), "-o", str(tmp_path / "run")]) == 2
    assert "stage=input" in capsys.readouterr().err
    assert not (tmp_path / "run").exists()


@pytest.mark.parametrize("text", ["[mesh\nkind = box\n", "[mesh]\nkind = sphere\n",
                                  "[solve]\nweights = magic\n", "[run]\nstages = solve dance\n",
                                  "[trace]\nstarts = spiral\n", "[extra]\na = 1\n",
                                  "[mesh]\nkind = box\nn = many\n"])
def test_malformed_config_exit_2(tmp_path, capsys, text):
    cfg = tmp_path / "c.ini"
    cfg.write_text(text)
    assert main(["pipeline", str(cfg), "-o", str(tmp_path / "run")]) == 2
    assert "error" in capsys.readouterr().err


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as e:
        main(["solve", "--weights", "uniform"])
    assert e.value.code == 2


def test_config_parsing():
    cfg = load_config(CONFIGS / "counterexample.ini")
    assert cfg.kind == "counterexample" and cfg.params == {"n": 20, "neck": 0.2, "seam": 1, "bend": 0.3}
    assert cfg.weights == "uniform" and cfg.levels == ("near-0", "mid-gap", "near-1")
    assert parse_starts("grid 12x7") == ("grid", (12, 7))
    assert parse_starts("lattice 3") == ("lattice", (3,))
    with pytest.raises(ConfigError):
        parse_starts("grid 12")
    with pytest.raises(ConfigError):
        config_from_dict({"mesh": {"kind": "file"}})


def test_level_targets():
    f = np.array([0.0, 1.0])
    t = dict(level_targets(("near-0", "mid-gap", 0.3, "near-1"), f, [0.4, 0.6]))
    assert t == {"near-0": 0.01, "mid-gap": 0.5, "0.3": 0.3, "near-1": 0.99}
    assert [k for k, _ in level_targets(("mid-gap",), f, [0.2, 0.4, 0.6])] == ["mid-gap-1", "mid-gap-2"]
    assert level_targets(("mid-gap",), f, []) == []


def test_box_pipeline_is_deterministic_and_summarized(tmp_path, capsys):
    cfg = tmp_path / "box.ini"
    cfg.write_text("[mesh]\nkind = box\nn = 5\n[trace]\nstarts = grid 8x8\n[report]\nfigures = no\n")
    assert main(["pipeline", str(cfg), "-o", str(tmp_path / "a")]) == 0
    assert main(["pipeline", str(cfg), "-o", str(tmp_path / "b")]) == 0
    for name in ("report.json", "manifest.json", "summary.txt", "field.txt", "mesh.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    summary = (tmp_path / "a" / "summary.txt").read_text()
    assert "no interior critical points; maximum principle: holds" in summary
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    assert rep["schema"] == "sweepmorse.report/1"
    assert rep["classify"]["interior"] == []
    assert verify_manifest(tmp_path / "a" / "manifest.json") == []


def test_manifest_detects_tampering(tmp_path):
    cfg = tmp_path / "box.ini"
    cfg.write_text("[mesh]\nkind = box\nn = 3\n[run]\nstages = generate solve classify\n"
                   "[report]\nfigures = no\n")
    assert main(["pipeline", str(cfg), "-o", str(tmp_path / "r")]) == 0
    assert main(["report", str(tmp_path / "r"), "--verify", "--no-figures"]) == 0
    with open(tmp_path / "r" / "field.txt", "a") as fh:
        fh.write("0.0\n")
    assert verify_manifest(tmp_path / "r" / "manifest.json")
    assert main(["report", str(tmp_path / "r"), "--verify", "--no-figures"]) == 1


def test_negative_weight_run_is_annotated(tmp_path):
    mesh, bc = generate_box(2)
    P = mesh.vertices.copy()
    P[~mesh.boundary_vertex] = [0.5, 0.5, 0.97]  # flatten the tets around the centre vertex
    write_native_mesh(tmp_path / "sliver.txt", mesh.with_positions(P))
    (tmp_path / "sliver.json").write_text(json.dumps(boundary_doc(bc)))
    cfg = tmp_path / "s.ini"
    cfg.write_text("[mesh]\nkind = file\npath = sliver.txt\nboundary = sliver.json\n"
                   "[solve]\nweights = cotangent\n[run]\nstages = solve classify\n")
    assert main(["pipeline", str(cfg), "-o", str(tmp_path / "run")]) == 0
    rep = json.loads((tmp_path / "run" / "report.json").read_text())
    assert rep["solve"]["negative_weights"] > 0 and rep["solve"]["min_weight"] < 0
    assert "scheme not guaranteed positive" in (tmp_path / "run" / "summary.txt").read_text()


@pytest.fixture(scope="module")
def ce_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ce") / "run"
    code = main(["pipeline", str(CONFIGS / "counterexample.ini"), "-o", str(out)])
    return code, out


def test_counterexample_pipeline(ce_run):
    code, out = ce_run
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert [e["type"] for e in rep["classify"]["interior"]] == ["1-saddle", "2-saddle"]
    assert rep["transitions"]["net_change"] == [0, 0, 0]
    assert rep["transitions"]["status"] == "ok"
    assert rep["max_principle"]["holds"]
    summary = (out / "summary.txt").read_text()
    assert "a=mid-gap: β=(1,2,0)" in summary
    assert "a=near-0: β=(1,0,0)" in summary and "a=near-1: β=(1,0,0)" in summary
    for fig in ("level_betti", "critical_points", "levelset_mid_gap", "traces"):
        p = out / "figures" / f"{fig}.png"
        assert p.is_file() and p.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    for s in ("levelset_mid_gap.obj", "levelset_mid_gap.vtk", "traces.obj"):
        assert (out / "surfaces" / s).stat().st_size > 0
    assert verify_manifest(out / "manifest.json") == []


def test_counterexample_rerun_from_manifest_is_byte_identical(ce_run, tmp_path):
    _, out = ce_run
    assert main(["pipeline", str(out / "manifest.json"), "-o", str(tmp_path / "again")]) == 0
    assert (tmp_path / "again" / "report.json").read_bytes() == (out / "report.json").read_bytes()


def test_summary_numbers_come_from_report(ce_run):
    _, out = ce_run
    rep = json.loads((out / "report.json").read_text())
    assert render_summary(rep) == (out / "summary.txt").read_text()
    for e in rep["classify"]["interior"]:
        assert f"{e['value']:.6g}" in render_summary(rep)


def test_single_stage_commands(ce_run, tmp_path, capsys):
    _, out = ce_run
    mesh, field, bnd = out / "mesh.txt", out / "field.txt", out / "boundary.json"
    assert main(["levelset", "--mesh", str(mesh), "--field", str(field), "--value", "mid-gap",
                 "-o", str(tmp_path / "s.vtk")]) == 0
    assert "β=(1,2,0)" in capsys.readouterr().out
    assert main(["transitions", "--mesh", str(mesh), "--field", str(field), "-o", str(tmp_path / "t.json")]) == 0
    assert json.loads((tmp_path / "t.json").read_text())["net_change"] == [0, 0, 0]
    assert main(["trace", "--mesh", str(mesh), "--field", str(field), "--boundary", str(bnd),
                 "--starts", "grid 6x6", "-o", str(tmp_path / "p.obj"), "--report", str(tmp_path / "p.json")]) == 0
    assert json.loads((tmp_path / "p.json").read_text())["n_starts"] > 0
    assert main(["levelset", "--mesh", str(mesh), "--field", str(field), "--value", "2.0"]) == 2


def test_console_script_entry_point(tmp_path):
    exe = shutil.which("sweepmorse")
    if exe is None:
        pytest.skip("package not installed as a console script")
    r = subprocess.run([exe, "generate", "--kind", "box", "-n", "2", "-o", str(tmp_path / "m.txt")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and (tmp_path / "m.boundary.json").is_file()
