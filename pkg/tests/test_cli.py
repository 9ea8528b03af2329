import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from poisson_homogeneity.cli import main
from poisson_homogeneity.poisson import PointPattern, write_pattern


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def calibrate_config(tmp_path, mc=20_000, n=(95, 105), checks=0, names=("ms", "th", "ms_half", "th_half")):
    tables = []
    for name in names:
        alpha = 0.025 if name.endswith("half") else 0.05
        proc = ({"type": "model_selection", "models": [1, 2, 3, 4, 5, 6], "weights": "uniform"}
                if name.startswith("ms") else {"type": "thresholding", "max_level": 6})
        tables.append({"name": name, "L": 100, "alpha": alpha, "procedure": proc,
                       "n_min": n[0], "n_max": n[1], "mc_samples": mc, "master_seed": 5})
    path = tmp_path / "cal.json"
    path.write_text(json.dumps({"tables": tables, "level_check_samples": checks}))
    return path


@pytest.fixture(scope="module")
def tables(tmp_path_factory):
    d = tmp_path_factory.mktemp("tables")
    assert main(["calibrate", "--config", str(calibrate_config(d)), "--out", str(d)]) == 0
    return d


def level_rows(out):
    rows = list(csv.DictReader(io.StringIO(out)))
    for r in rows:
        r["alpha"] = 0.025 if r["table"].endswith("half") else 0.05
    return rows


def test_calibrate_desk_level_check(tmp_path, capsys):
    code, out, _ = run(capsys, "calibrate", "--config", calibrate_config(tmp_path, checks=20_000),
                       "--out", tmp_path / "out")
    assert code == 0
    rows = level_rows(out)
    assert len(rows) == 4 * 11
    for r in rows:
        assert float(r["calibrated_level"]) >= r["alpha"]
        assert abs(float(r["fresh_level"]) - r["alpha"]) <= 0.02
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == [
        "ms.json", "ms_half.json", "th.json", "th_half.json"]


def test_calibrate_2000_samples_model_selection(tmp_path, capsys):
    cfg = calibrate_config(tmp_path, mc=2_000, n=(40, 160), checks=20_000, names=("ms",))
    code, out, _ = run(capsys, "calibrate", "--config", cfg, "--out", tmp_path)
    assert code == 0
    for r in level_rows(out):
        assert abs(float(r["fresh_level"]) - r["alpha"]) <= 0.02


@pytest.mark.xfail(strict=True, reason=(
    "1 000 samples per half cannot resolve the per-index levels alpha/(2^j * 6) down to "
    "0.05/192: the upper empirical quantile is the sample maximum, and the union over 63 "
    "indices leaves a fresh level near 0.08"))
def test_calibrate_2000_samples_thresholding(tmp_path, capsys):
    cfg = calibrate_config(tmp_path, mc=2_000, n=(40, 160), checks=20_000, names=("th",))
    code, out, _ = run(capsys, "calibrate", "--config", cfg, "--out", tmp_path)
    assert code == 0
    for r in level_rows(out):
        assert abs(float(r["fresh_level"]) - r["alpha"]) <= 0.02


def test_empty_data_accepts_everywhere(tables, tmp_path, capsys):
    data = tmp_path / "empty.csv"
    write_pattern(PointPattern([], 100.0), data)
    code, out, _ = run(capsys, "test", "--table", tables / "ms_half.json", "--table", tables / "th_half.json",
                       "--data", data, "--procedures", "combined,ks,laplace,z", "--alpha", 0.05)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["procedure"] for r in rows] == ["combined", "ks", "laplace", "z"]
    assert all(r["reject"] == "0" and r["n"] == "0" for r in rows)


def test_data_verdicts(tables, tmp_path, capsys):
    data = tmp_path / "d.csv"
    write_pattern(PointPattern(np.random.default_rng(0).random(100) ** 3, 100.0), data)
    code, out, _ = run(capsys, "test", "--table", tables / "ms.json", "--table", tables / "th.json",
                       "--data", data)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["procedure"] for r in rows] == ["model_selection", "thresholding", "ks", "laplace", "z"]
    by = {r["procedure"]: r for r in rows}
    assert by["model_selection"]["reject"] == "1" and by["ks"]["reject"] == "1"
    for r in rows:
        assert (float(r["statistic"]) > 0) == (r["reject"] == "1")


def test_simulated_null_rejection_rate(tables, capsys):
    reps = 4_000
    code, out, _ = run(capsys, "test", "--table", tables / "th.json", "--simulate",
                       '{"variant": "constant", "level": 1}', "--repeat", reps, "--seed", 3,
                       "--procedures", "thresholding,ks")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    for proc in ("thresholding", "ks"):
        rate = np.mean([r["reject"] == "1" for r in rows if r["procedure"] == proc])
        assert abs(rate - 0.05) <= 3 * math.sqrt(0.05 * 0.95 / reps) + 0.01


def test_malformed_csv_exit_code(tables, tmp_path, capsys):
    data = tmp_path / "bad.csv"
    data.write_text("# L=100\nx\n0.1\n0.2\noops\n")
    code, _, err = run(capsys, "test", "--table", tables / "ms.json", "--data", data)
    assert code == 2 and "line 5" in err


def test_scale_mismatch_exit_code(tables, tmp_path, capsys):
    data = tmp_path / "d.csv"
    write_pattern(PointPattern([0.2, 0.4], 50.0), data)
    code, _, err = run(capsys, "test", "--table", tables / "ms.json", "--data", data)
    assert code == 2 and "L=50" in err


@pytest.mark.parametrize("argv", [
    ["test", "--table", "missing.json", "--data", "x.csv"],
    ["test", "--data", "x.csv", "--procedures", "model_selection"],
    ["power", "--config", "no-such-preset"],
    ["presets", "nothing"],
])
def test_usage_errors_exit_2(tmp_path, capsys, argv, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "x.csv").write_text("# L=100\nx\n0.5\n")
    code, _, err = run(capsys, *argv)
    assert code == 2 and err.startswith("error:")


def test_wrong_schema_table_exit_2(tables, tmp_path, capsys):
    data = json.loads((tables / "ms.json").read_text())
    data["schema_version"] = 99
    bad = tmp_path / "t.json"
    bad.write_text(json.dumps(data))
    (tmp_path / "x.csv").write_text("# L=100\nx\n0.5\n")
    code, _, err = run(capsys, "test", "--table", bad, "--data", tmp_path / "x.csv")
    assert code == 2 and "schema" in err


def test_invalid_json_config_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text("{oops")
    code, _, _ = run(capsys, "calibrate", "--config", cfg, "--out", tmp_path)
    assert code == 2


def test_presets_listing(capsys):
    code, out, _ = run(capsys, "presets")
    assert code == 0 and "paper-s1" in out.split()
    code, out, _ = run(capsys, "presets", "desk-s3")
    assert code == 0 and json.loads(out)["replications"] == 2_000


def test_power_and_plot(tmp_path, capsys):
    cfg = json.loads(json.dumps(__import__("poisson_homogeneity.harness", fromlist=["x"]).load_config("desk-s4")))
    cfg["replications"] = 200
    cfg["procedures"] = ["ks", "laplace"]
    path = tmp_path / "p.json"
    path.write_text(json.dumps(cfg))
    code, out, _ = run(capsys, "power", "--config", path, "--out", tmp_path / "o")
    assert code == 0
    names = sorted(p.name for p in (tmp_path / "o").iterdir())
    assert names == ["power_metadata.json", "power_s4.csv", "power_s4_table.csv"]
    rows = list(csv.DictReader(open(tmp_path / "o" / "power_s4.csv")))
    for r in rows:
        p = int(r["rejections"]) / int(r["replications"])
        assert float(r["power"]) == p
        assert float(r["mc_stderr"]) == math.sqrt(p * (1 - p) / int(r["replications"]))
    code, out, _ = run(capsys, "plot", tmp_path / "o" / "power_s4.csv", "--out", tmp_path / "svg")
    assert code == 0 and (tmp_path / "svg" / "power_s4.svg").read_text().startswith("<?xml")
    code, _, err = run(capsys, "plot", tmp_path / "o" / "power_metadata.json", "--out", tmp_path / "svg")
    assert code == 1


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "poisson_homogeneity", "presets"],
                         capture_output=True, text=True, check=True)
    assert "rate-probe" in out.stdout
