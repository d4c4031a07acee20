import json

import pytest

from flatlas.atlas import AnalysisReport, INOMEGAONLY_WARNING, render_report
from flatlas.cli import main, run_command


def run(*argv):
    code, out = run_command(list(argv))
    return code, out.decode("utf-8")


def run_json(*argv):
    code, out = run_command([*argv, "--format", "json"])
    return code, json.loads(out)


def test_classify_generic():
    code, out = run("classify", "example1.sys", "--point", "x=1,0,0", "u=0,0")
    assert code == 0
    assert "classification: InOmega0(k=2)" in out


def test_classify_named_point_attempts_degenerate_route():
    code, out = run("classify", "example1.sys", "--point", "degenerate")
    assert code == 0
    assert INOMEGAONLY_WARNING in out
    assert "flat_output: [\"x1\", \"u1\"]" in out


def test_classify_outside_omega(tmp_path):
    p = tmp_path / "neg.sys"
    p.write_text("system neg\nstates x1 x2\ncontrols u1\nf0 = [0, x2]\nf1 = [1, 0]\n")
    code, d = run_json("classify", str(p), "--point", "x=0,1")
    assert code == 1
    assert d["points"][0]["tag"] == "OutsideOmega"


def test_flat_degenerate_example2_aborts():
    code, out = run("flat-degenerate", "example2.sys", "--point", "x=0,1,1,1", "u=1,0,0")
    assert code == 1
    assert "not involutive" in out


def test_flat_generic_with_psi():
    code, d = run_json("flat-generic", "example2.sys", "--point", "generic", "--k", "3",
                       "--psi", "x1, x2, x4")
    assert code == 0
    assert d["generic"][0]["verdict"] == "flat-output-verified"
    code, d = run_json("flat-generic", "example2.sys", "--point", "generic", "--k", "3",
                       "--psi", "x1, x2, x3")
    assert code == 1


def test_flat_degenerate_split_flag():
    code, d = run_json("flat-degenerate", "example3.sys", "--point", "x=0,0,0,0,1,0",
                       "--split", "a=1,2,b=3")
    assert code == 0
    assert d["degenerate"][0]["brunovsky_indices"] == [3, 3]


def test_atlas_example1_two_verified_charts():
    code, d = run_json("atlas", "example1.sys")
    assert code == 0
    charts = d["charts"]
    assert [c["flat_output"] for c in charts] == [["x1", "x2"], ["x1", "u1"]]
    assert charts[0]["domain"] == ["x1 != 0"]
    assert charts[1]["domain"][0].startswith("box(")
    assert all(c["status"] == "verified" for c in charts)


def test_atlas_example3_text():
    code, out = run("atlas", "example3.sys")
    assert code == 0
    assert "brunovsky_indices: [3, 3]" in out


def test_exit_codes_on_corpus():
    assert run("atlas", "example2.sys")[0] == 1
    assert run("brackets", "example2.sys")[0] == 0


def test_text_and_json_agree():
    _, d = run_json("atlas", "example1.sys")
    _, out = run("atlas", "example1.sys")
    for c in d["charts"]:
        assert f"route: {c['route']}" in out
    assert f"seed {d['seed']}" in out


def test_seed_flag_and_env(monkeypatch):
    _, d = run_json("classify", "example1.sys", "--point", "generic", "--seed", "7")
    assert d["seed"] == 7
    monkeypatch.setenv("FLATLAS_SEED", "0x10")
    _, d = run_json("classify", "example1.sys", "--point", "generic")
    assert d["seed"] == 16


def test_simulate():
    code, d = run_json("simulate", "example1.sys", "--chart", "chart2",
                       "--signal", "0.1*sin(t); 1 + 0.1*t")
    assert code == 0
    assert d["simulation"]["z_error"] < 1e-5


@pytest.mark.parametrize("argv", [
    ["classify", "nothing.sys", "--point", "x=1"],
    ["classify", "example1.sys", "--point", "x=1,0"],
    ["classify", "example1.sys", "--point", "nowhere"],
    ["flat-degenerate", "example3.sys", "--point", "degenerate", "--split", "b=3"],
    ["simulate", "example1.sys", "--chart", "chart9", "--signal", "t"],
    ["simulate", "example1.sys", "--chart", "chart1", "--signal", "t +"],
    ["bogus", "example1.sys"],
])
def test_usage_errors_exit_2(argv):
    assert run(*argv)[0] == 2


def test_empty_report():
    out = render_report(AnalysisReport("s", "classify", 1)).decode("utf-8")
    assert out.splitlines()[0].startswith("flatlas report:")
    assert "no points analyzed" in out


def test_main_writes_utf8(capsysbinary):
    assert main(["brackets", "example1.sys"]) == 0
    out = capsysbinary.readouterr().out
    assert out.decode("utf-8").startswith("flatlas report")
