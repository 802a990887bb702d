import json
import os
import subprocess
import sys
import time
from importlib.resources import files

import jsonschema
import numpy as np
import pytest

import surveyperm
from surveyperm.cli import DEFAULT_SEED, SEED_ENV, main

TINY = str(surveyperm.data_path("tiny.csv"))
CE = str(surveyperm.data_path("ce_like.csv"))
CE_FLAGS = ["--g", "college", "--w", "weight", "--cluster", "psu"]


def schema(name):
    return json.loads((files("surveyperm") / "schemas" / name).read_text())


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestTest:
    def test_stable_json_matching_schema(self, capsys):
        code, out, err = run(capsys, "test", TINY, "--mode", "pseudo_cluster", "--m", "1000", "--seed", "7")
        assert code == 0
        assert "seed = 7" in err
        data = json.loads(out)
        jsonschema.validate(data, schema("test_output.schema.json"))
        assert data["result"]["seed"] == 7 and data["result"]["m"] == 1000
        code, again, _ = run(capsys, "test", TINY, "--mode", "pseudo_cluster", "--m", "1000", "--seed", "7")
        assert again == out

    def test_naive_shares_the_statistic(self, capsys):
        _, pseudo, _ = run(capsys, "test", TINY, "--m", "1000", "--seed", "7")
        _, naive, _ = run(capsys, "test", TINY, "--mode", "naive_global", "--m", "1000", "--seed", "7")
        a, b = json.loads(pseudo)["result"], json.loads(naive)["result"]
        assert a["psi_observed"] == b["psi_observed"]
        assert a["psi_permuted"] != b["psi_permuted"]

    def test_exact_mode(self, capsys):
        code, out, _ = run(capsys, "test", TINY, "--mode", "exact_cluster")
        assert code == 0
        assert json.loads(out)["result"]["m"] == 24 * 6**4

    def test_seed_from_environment(self, capsys, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "123")
        _, out, err = run(capsys, "test", TINY, "--m", "50")
        assert "seed = 123" in err
        assert json.loads(out)["result"]["seed"] == 123
        monkeypatch.delenv(SEED_ENV)
        _, out, err = run(capsys, "test", TINY, "--m", "50")
        assert f"seed = {DEFAULT_SEED}" in err

    def test_bad_seed_environment(self, capsys, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "abc")
        code, _, err = run(capsys, "test", TINY, "--m", "50")
        assert code == 1 and SEED_ENV in err

    def test_malformed_csv_names_row(self, capsys, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("y,g,w,cluster\n1,0,1,a\n2,1,oops,a\n3,1,1,b\n")
        code, out, err = run(capsys, "test", str(path))
        assert code == 1 and out == ""
        assert "rows 2" in err

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "test", str(tmp_path / "none.csv"))
        assert code == 1 and "error" in err

    def test_singular_design_exits_2(self, capsys, tmp_path):
        path = tmp_path / "dup.csv"
        rows = ["y,g,w,cluster,a,b"] + [f"{i},{i % 2},1,{i // 3},{i},{2 * i}" for i in range(9)]
        path.write_text("\n".join(rows) + "\n")
        code, _, err = run(capsys, "test", str(path), "--covariates", "a,b")
        assert code == 2 and "rank deficient" in err

    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["test", TINY, "--permutations", "5"])
        assert exc.value.code == 1

    def test_schema_file(self, capsys, tmp_path):
        ini = tmp_path / "schema.ini"
        ini.write_text("[schema]\ny = income\ng = college\nw = weight\ncluster = psu\n")
        code, out, _ = run(capsys, "test", CE, "--schema", str(ini), "--center", "--m", "200", "--seed", "1")
        assert code == 0 and json.loads(out)["centered"] is True
        ini.write_text("[schema]\nresponse = income\n")
        code, _, err = run(capsys, "test", CE, "--schema", str(ini))
        assert code == 1 and "response" in err

    def test_threads_do_not_change_output(self, capsys):
        argv = ["test", CE, "--y", "income", *CE_FLAGS, "--center", "--m", "800", "--seed", "3"]
        _, one, _ = run(capsys, *argv)
        _, four, _ = run(capsys, *argv, "--threads", "4")
        assert one == four


class TestDiagnose:
    def test_key_value_lines(self, capsys):
        code, out, _ = run(capsys, "diagnose", TINY)
        assert code == 0
        lines = dict(line.split(" = ", 1) for line in out.splitlines())
        assert lines["rows"] == "12" and lines["clusters"] == "4" and lines["valid"] == "true"
        assert float(lines["cluster_size_ratio_indicator"]) == pytest.approx(4 / np.sqrt(3))

    def test_warnings_listed(self, capsys, tmp_path):
        path = tmp_path / "single.csv"
        path.write_text("y,g,w,cluster\n1,0,1,a\n2,1,1,a\n3,1,1,b\n")
        _, out, _ = run(capsys, "diagnose", str(path))
        assert "warning = singleton_cluster" in out


class TestSimulate:
    def test_defaults(self, capsys, tmp_path):
        code, out, err = run(capsys, "simulate", "--out", str(tmp_path / "pop.csv"), "--seed", "2017")
        assert code == 0
        summary = json.loads(out)
        jsonschema.validate(summary, schema("simulate_summary.schema.json"))
        assert summary["rows"] == 10_000
        assert (tmp_path / "pop.csv").read_text().count("\n") == 10_001
        assert (tmp_path / "pop_truth.csv").exists()

    def test_sigma_eta_delta(self, capsys, tmp_path):
        _, out, _ = run(
            capsys, "simulate", "--out", str(tmp_path / "p.csv"), "--delta-mode", "sigma-eta", "--n-clusters", "20"
        )
        assert json.loads(out)["delta"] == pytest.approx(4.031, abs=5e-4)

    def test_same_seed_same_files(self, capsys, tmp_path):
        for name in ("a", "b"):
            run(capsys, "simulate", "--out", str(tmp_path / f"{name}.csv"), "--seed", "9", "--n-clusters", "30")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a_truth.csv").read_bytes() == (tmp_path / "b_truth.csv").read_bytes()

    def test_bad_parameters(self, capsys, tmp_path):
        code, _, err = run(capsys, "simulate", "--out", str(tmp_path / "p.csv"), "--sigma-nu", "-1")
        assert code == 1 and "sigma" in err


class TestStudy:
    def test_smoke_config_is_fast(self, capsys, tmp_path):
        start = time.perf_counter()
        code, out, err = run(capsys, "study", str(surveyperm.data_path("smoke.ini")), "--out", str(tmp_path))
        assert time.perf_counter() - start < 1.0
        assert code == 0 and "seed = 1" in err
        assert out.splitlines()[0].startswith("alpha")
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        jsonschema.validate(manifest, schema("manifest.schema.json"))

    def test_gnuplot_hints(self, capsys, tmp_path):
        _, out, _ = run(
            capsys, "study", str(surveyperm.data_path("smoke.ini")), "--out", str(tmp_path), "--gnuplot-hints"
        )
        assert "# gnuplot" in out and "curves.csv" in out

    def test_unwritable_output(self, capsys, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        code, _, err = run(capsys, "study", str(surveyperm.data_path("smoke.ini")), "--out", str(blocker / "sub"))
        assert code == 1 and "error" in err

    @pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
    def test_read_only_directory(self, capsys, tmp_path):
        ro = tmp_path / "ro"
        ro.mkdir()
        ro.chmod(0o500)
        code, _, _ = run(capsys, "study", str(surveyperm.data_path("smoke.ini")), "--out", str(ro))
        assert code == 1

    def test_config_error_names_key(self, capsys, tmp_path):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[design]\ntype = srs\nn = 60\nreplicats = 3\n")
        code, _, err = run(capsys, "study", str(cfg), "--out", str(tmp_path / "o"))
        assert code == 1 and "replicats" in err

    def test_output_dir_required(self, capsys, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[design]\ntype = srs\nn = 60\n[test]\nreplicates = 1\nm = 10\n")
        code, _, err = run(capsys, "study", str(cfg))
        assert code == 1 and "--out" in err


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "surveyperm.cli", "test", TINY, "--m", "100", "--seed", "5"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["result"]["seed"] == 5
