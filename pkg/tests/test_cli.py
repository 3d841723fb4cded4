"""Subcommands end to end, through ``main`` and the installed console script."""

import csv
import json
import subprocess
import sys

import pytest

from spshm import cli, fl
from spshm.features import freq_features_matrix, time_features_matrix
from spshm.qa import EmptyDatasetWarning, export_qa
from spshm.sim import read_csv, sha256_file

SMALL = "[sim]\norbit_period_s = 600\nn_orbits = 2\nfl_windows_per_class = 2\n"


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return str(p)


def manifest(out):
    return json.loads((out / "run_manifest.json").read_text())


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


class TestSimulate:
    def test_fr_writes_six_files(self, tmp_path, small_cfg):
        out = tmp_path / "fr"
        assert run_cli("simulate", "--kind", "fr", "--config", small_cfg, "--out", out) == 0
        m = manifest(out)
        assert len([a for a in m["artifacts"] if a["path"].endswith(".csv")]) == 6
        assert m["errors"] == [] and m["seed"] == 7

    def test_two_runs_are_byte_identical(self, tmp_path, small_cfg):
        for name in ("a", "b"):
            assert run_cli("simulate", "--kind", "MR", "--config", small_cfg, "--seed", 3, "--out", tmp_path / name) == 0
        assert sha256_file(tmp_path / "a" / "MR.csv") == sha256_file(tmp_path / "b" / "MR.csv")

    def test_console_script(self, tmp_path, small_cfg):
        r = subprocess.run([sys.executable, "-m", "spshm", "simulate", "--kind", "AD", "--config", small_cfg,
                            "--out", str(tmp_path)], capture_output=True, text=True)
        assert r.returncode == 0, r.stderr
        assert (tmp_path / "AD_Train.csv").exists() and (tmp_path / "AD_Test.csv").exists()


class TestExitCodes:
    def test_bad_config_is_nonzero_with_manifest(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("[sim]\nseed = x\n")
        assert run_cli("simulate", "--config", bad, "--out", tmp_path / "o") == 1
        assert manifest(tmp_path / "o")["errors"]

    def test_missing_input_is_nonzero(self, tmp_path):
        assert run_cli("recognize", tmp_path / "none.csv", "--out", tmp_path / "o") == 1

    def test_unknown_fault(self, tmp_path):
        assert run_cli("advise", "WARP_CORE", "--out", tmp_path) == 1

    def test_success_has_no_errors(self, tmp_path):
        assert run_cli("advise", "LOAD2_OPEN", "--out", tmp_path) == 0
        m = manifest(tmp_path)
        assert m["errors"] == [] and {a["path"].rsplit("/", 1)[-1] for a in m["artifacts"]} == {
            "maintenance_report.txt", "maintenance_report.json"}


class TestPipelineCommands:
    def test_detect_and_recognize(self, tmp_path):
        # two training orbits so the seasonal model has more than one period to fit
        small_cfg = tmp_path / "ad.ini"
        small_cfg.write_text(SMALL.replace("n_orbits = 2", "n_orbits = 4"))
        data = tmp_path / "ad"
        run_cli("simulate", "--kind", "AD", "--config", small_cfg, "--out", data)
        assert run_cli("detect", "--train", data / "AD_Train.csv", data / "AD_Test.csv", "--config", small_cfg,
                       "--out", tmp_path / "det") == 0
        d = json.loads((tmp_path / "det" / "detection.json").read_text())
        assert 0.0 <= d["anomaly_ratio"] <= 1.0
        assert run_cli("recognize", data / "AD_Test.csv", "--out", tmp_path / "rec") == 0
        assert "Step 1:" in (tmp_path / "rec" / "recognition.txt").read_text()

    def test_diagnose_then_evaluate(self, tmp_path, small_cfg):
        data = tmp_path / "fl"
        run_cli("simulate", "--kind", "FL", "--config", small_cfg, "--out", data)
        assert run_cli("diagnose", "--train", data / "FL.csv", data / "FL.csv", "--out", tmp_path / "dg") == 0
        pred = tmp_path / "dg" / "predictions.csv"
        assert run_cli("evaluate", pred, "--out", tmp_path / "ev") == 0
        with open(tmp_path / "ev" / "confusion_percent.csv") as fh:
            rows = list(csv.reader(fh))[1:]
        assert len(rows) == 17
        for row in rows:
            assert sum(float(v) for v in row[1:]) == pytest.approx(100.0, abs=0.05)

    def test_evaluate_rejects_bad_columns(self, tmp_path):
        p = tmp_path / "p.csv"
        p.write_text("a,b\n1,2\n")
        assert run_cli("evaluate", p, "--out", tmp_path / "o") == 1

    def test_ops_script(self, tmp_path, capsys):
        script = tmp_path / "cmds.txt"
        script.write_text("list algorithms\n# a comment\nadvise BAT_OPEN\nhello\nadvise\n")
        assert run_cli("ops", "--script", script, "--out", tmp_path / "ops") == 0
        out = capsys.readouterr().out
        assert "Tool invocation accuracy: 2/3" in out
        assert len((tmp_path / "ops" / "session.log").read_text().splitlines()) == 4


class TestExportQA:
    def test_eight_sample_window(self, tmp_path, small_cfg):
        data = tmp_path / "fl"
        assert run_cli("simulate", "--kind", "FL", "--config", small_cfg, "--window", 8, "--out", data) == 0
        assert run_cli("export-qa", data / "FL.csv", "--out", tmp_path / "qa") == 0
        tel = read_csv(data / "FL.csv")
        windows, labels = fl.split_windows(tel)
        assert len(list((tmp_path / "qa").glob("qa_*.txt"))) == len(windows) == 34
        text = (tmp_path / "qa" / "qa_00000.txt").read_text()
        w = windows[0]
        assert w.shape == (8, 33)
        with open(data / "FL.csv") as fh:
            rows = list(csv.reader(fh))
        header, first = rows[0], rows[1:9]
        col = header.index("SA_V")
        assert "SA_V (" in text
        line = next(l for l in text.splitlines() if l.startswith("SA_V ("))
        assert line.split(": ", 1)[1] == ",".join(r[col] for r in first)
        tf = time_features_matrix(w).values
        mean_line = next(l for l in text.splitlines() if l.startswith("Time-domain mean:"))
        assert mean_line.split(": ", 1)[1] == ",".join(repr(float(v)) for v in tf[0])
        ff = freq_features_matrix(w).values
        f24_line = next(l for l in text.splitlines() if l.startswith("Frequency-domain standard deviation frequency:"))
        assert f24_line.split(": ", 1)[1] == ",".join(repr(float(v)) for v in ff[12])
        assert text.rstrip().endswith(".") and "### Answer:" in text

    def test_empty_dataset(self, tmp_path):
        from spshm.sim import fl_windows, ScenarioConfig

        empty = fl_windows(ScenarioConfig(), per_class=0)
        with pytest.warns(EmptyDatasetWarning):
            assert export_qa(empty, tmp_path / "qa") == []
        assert not (tmp_path / "qa").exists()


class TestLoop:
    def test_battery_open_loop(self, tmp_path):
        assert run_cli("loop", "--out", tmp_path) == 0
        r = json.loads((tmp_path / "loop_report.json").read_text())
        assert r["fault_window_hit"] and r["diagnosis"]["fault"] == "BAT_OPEN"
        c = r["citations"]
        assert c["total"] > 0 and c["resolvable"] == c["total"]
        assert r["wcr"]["agreement"] == 1.0

    def test_fault_free_loop(self, tmp_path):
        assert run_cli("loop", "--fault-free", "--out", tmp_path) == 0
        r = json.loads((tmp_path / "loop_report.json").read_text())
        assert r["injection"] is None and r["diagnosis"] is None and r["report"] is None
        assert r["wcr"]["agreement"] == 1.0
        assert "skipped" in (tmp_path / "loop_report.txt").read_text()
