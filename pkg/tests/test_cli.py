import json

import pytest
import yaml
from click.testing import CliRunner

from wlgeom.cli import REPORT_SCHEMA, main
from wlgeom.xyz import read_xyz


@pytest.fixture
def run(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    runner = CliRunner()

    def invoke(*args, code=0):
        result = runner.invoke(main, [str(a) for a in args])
        assert result.exit_code == code, result.output
        return result

    return invoke


def _results(path):
    rep = json.loads(open(path).read())
    assert rep["schema"] == REPORT_SCHEMA
    return rep


def test_generate_certifies_and_writes_files(run):
    out = run("generate", "--p", 4, "--cz", 1, "--out-dir", "g").output
    assert "certification=PASS" in out
    rep = _results("g/pair_report.json")
    assert rep["results"]["wl_equal"] is True and rep["results"]["congruent"] is None
    assert rep["results"]["certificate"]["wl_classes"] == {"1.5": [3, 3], "3.0": [3, 3], "10.0": [3, 3]}
    assert rep["command"]["name"] == "generate" and rep["command"]["params"]["p"] == 4.0
    assert "timing_s" in rep
    plus = read_xyz("g/pair_plus.xyz")
    assert plus.cell == (4.0, None, None) and len(plus) == 6


def test_generate_folded_reports_non_congruence(run):
    run("generate", "--cy", 0.5, "--vy", 0.25, "--fold", 3, "--out-dir", "f")
    res = _results("f/pair_report.json")["results"]
    assert res["wl_equal"] is True and res["congruent"] is False
    assert len(read_xyz("f/pair_plus.xyz")) == 18


def test_generate_invalid_params_exit_2(run):
    out = run("generate", "--cz", "1e-6", "--out-dir", "g", code=2).output
    assert "min_asymmetry" in out
    run("generate", "--fold", 1, "--out-dir", "g", code=2)
    run("generate", "--extra", "Q:1:2:X", "--out-dir", "g", code=2)
    run("generate", "--catalog", "nope", "--out-dir", "g", code=2)


def test_generate_certification_failure_exit_1(run):
    out = run("generate", "--cy", 0, "--wy", 0, "--wz", 0, "--vx", 1, "--vy", 0, "--out-dir", "bad", code=1).output
    assert "certification=FAIL" in out
    res = _results("bad/pair_report.json")["results"]
    assert res["certificate"]["failures"] == ["angular refinement does not separate the pair at iteration 1"]


def test_generate_unchecked_skips_certification(run):
    run("generate", "--cy", 0, "--wy", 0, "--wz", 0, "--vx", 1, "--vy", 0, "--unchecked", "--out-dir", "u")
    assert _results("u/pair_report.json")["results"]["certificate"] is None


def test_generate_with_extras_and_periodize(run):
    run("generate", "--extra", "W:0.5:-1:W", "--extra", "V:1.25:1.5:V", "--periodize", "6,7", "--out-dir", "e")
    plus = read_xyz("e/pair_plus.xyz")
    assert len(plus) == 10 and plus.cell == (4.0, 6.0, 7.0)
    run("generate", "--periodize", "6", "--out-dir", "e", code=2)


def test_catalog_written_verbatim(run):
    from wlgeom.approximator import R_MINUS, R_PLUS

    run("generate", "--catalog", "appendixB", "--out-dir", "c", "--prefix", "ab")
    assert read_xyz("c/ab_plus.xyz").positions.tolist() == R_PLUS.tolist()
    assert read_xyz("c/ab_minus.xyz").positions.tolist() == R_MINUS.tolist()
    cat = _results("c/ab_report.json")["results"]["catalog"]
    assert cat["global_distances_equal"] and cat["per_node_distances_equal"]
    assert cat["angular_first_divergent_iteration"] == 1
    assert cat["congruence"]["congruent"] is False


def test_wl_test_verdicts(run):
    run("generate", "--catalog", "appendixB", "--out-dir", "c", "--prefix", "ab")
    run("generate", "--catalog", "ring12", "--out-dir", "c", "--prefix", "r")
    assert run("wl-test", "c/ab_plus.xyz", "c/ab_minus.xyz", "--full").output.startswith("DISTINCT at iteration 2")
    out = run("wl-test", "c/ab_plus.xyz", "c/ab_minus.xyz", "--full", "--angular").output
    assert out.startswith("DISTINCT at iteration 1")
    assert run("wl-test", "c/r_plus.xyz", "c/r_minus.xyz", "--cutoff", 1.1).output.startswith("EQUAL")
    assert run("wl-test", "c/r_plus.xyz", "c/r_minus.xyz", "--cutoff", 2.0).output.startswith("DISTINCT at iteration 1")
    assert run("wl-test", "c/r_plus.xyz", "c/r_plus.xyz", "--knn", 3).output.startswith("EQUAL")
    out = run("wl-test", "c/r_plus.xyz", "c/r_minus.xyz", "--cutoff", 1.1, "--tolerant", "1e-8").output
    assert out.startswith("EQUAL")


def test_wl_test_errors(run, tmp_path):
    run("generate", "--out-dir", "g")
    run("wl-test", "g/pair_plus.xyz", "g/pair_minus.xyz", code=2)
    run("wl-test", "g/pair_plus.xyz", "g/pair_minus.xyz", "--cutoff", 1, "--full", code=2)
    # fully connected is undefined for a periodic file
    assert "periodic" in run("wl-test", "g/pair_plus.xyz", "g/pair_minus.xyz", "--full", code=2).output
    (tmp_path / "broken.xyz").write_text("3\n\nC 0 0 0\n")
    assert "line 4" in run("wl-test", "broken.xyz", "g/pair_plus.xyz", "--cutoff", 1, code=2).output


def test_report_reproduces_verdict_from_embedded_config(run, tmp_path):
    run("generate", "--catalog", "ring12", "--out-dir", "c", "--prefix", "r")
    run("wl-test", "c/r_plus.xyz", "c/r_minus.xyz", "--cutoff", 2.0, "--report", "first.json")
    first = _results("first.json")
    (tmp_path / "cfg.yaml").write_text(yaml.safe_dump({"wl-test": first["command"]["params"]}))
    run("--config", "cfg.yaml", "wl-test", "--report", "second.json")
    second = _results("second.json")
    assert second["results"] == first["results"]
    assert second["config"] == first["config"]


def test_config_defaults_and_flag_precedence(run, tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"generate": {"p": 6.0, "cz": 0.5, "out-dir": "cfg"}}))
    run("--config", "cfg.json", "generate")
    assert _results("cfg/pair_report.json")["config"]["params"]["p"] == 6.0
    run("--config", "cfg.json", "generate", "--p", 5.0)
    params = _results("cfg/pair_report.json")["config"]["params"]
    assert params["p"] == 5.0 and params["c_z"] == 0.5


def test_generate_reproduces_from_report(run, tmp_path):
    run("generate", "--p", 5, "--cy", 0.25, "--vy", 2.5, "--out-dir", "a")
    first = _results("a/pair_report.json")
    params = dict(first["command"]["params"], out_dir="b", report=None)
    (tmp_path / "cfg.yaml").write_text(yaml.safe_dump({"generate": params}))
    run("--config", "cfg.yaml", "generate")
    second = _results("b/pair_report.json")
    assert second["results"]["certificate"] == first["results"]["certificate"]
    assert open("a/pair_plus.xyz").read() == open("b/pair_plus.xyz").read()


def test_sample_is_byte_identical(run, monkeypatch):
    import filecmp
    import shutil
    from pathlib import Path

    run("sample", "--count", 12, "--seed", 7, "--out", "s")
    shutil.move("s", "first")
    # same command again, now with a worker pool
    monkeypatch.setenv("WLGEOM_THREADS", "2")
    run("sample", "--count", 12, "--seed", 7, "--out", "s")
    names = sorted(p.name for p in Path("first").iterdir())
    assert len(names) == 25
    assert filecmp.cmpfiles("first", "s", names, shallow=False)[0] == names
    summary = _results("s/summary.json")
    assert summary["results"]["certified"] == 12
    assert set(summary["results"]["parameter_stats"]) == {"p", "c_y", "c_z", "w_y", "w_z", "v_x", "v_y"}
    assert "timing_s" not in summary


def test_sample_failure_reports_diagnostics(run):
    out = run("sample", "--count", 2, "--ranges", "c_z=0:1e-5", "--max-retries", 10, "--out", "s", code=2).output
    assert "diagnostics=" in out and "DegenerateParametersError" in out
    run("sample", "--count", 2, "--ranges", "c_z", "--out", "s", code=2)


def test_appendixb_command(run):
    out = run("appendixb", "--trials", 20, "--report", "ab.json").output
    assert out.splitlines()[0].startswith("target difference = 192·I (residual")
    assert "≤ 1e-8" in out.splitlines()[0]
    assert "zeta    = (2, [-8, -8," in out
    assert "kappa_4 = (-1," in out
    assert "max |predicted diagonal| = 0;" in out and "certificate PASS" in out
    rep = _results("ab.json")
    assert rep["results"]["passed"] and "per_trial" not in rep["results"]
    assert "trials must be >= 1" in run("appendixb", "--trials", 0, code=2).output


def test_floor_command(run, tmp_path):
    out = run("floor", "--builtin").output
    assert "sqrt(mean(((e_plus - e_minus) / 2)^2))" in out and "1.096 eV" in out
    (tmp_path / "e.txt").write_text("# e+ e-\n-0.92 2.43\n0.39, 2.07\n-0.65 -0.04\n")
    assert "1.096 eV" in run("floor", "--energies", "e.txt").output
    (tmp_path / "same.json").write_text("[[1.5, 1.5]]")
    assert "0.000 eV" in run("floor", "--energies", "same.json").output
    (tmp_path / "empty.txt").write_text("")
    assert "at least one" in run("floor", "--energies", "empty.txt", code=2).output
    (tmp_path / "bad.txt").write_text("1 2 3\n")
    assert "bad.txt:1" in run("floor", "--energies", "bad.txt", code=2).output
    run("floor", code=2)
