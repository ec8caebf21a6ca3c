import csv
import io
import json

import pytest

from coexqkd.cli import SWEEP_COLUMNS, main

BUDGET = """\
element                                 IL@1310 (dB)   iso@1550 (dB)
CWDM 1                                           0.8            > 45
CWDM 2                                           0.6            > 45
CWDM 3                                           0.8            > 45
Filter Spool                                     1.0            32.9
FBG and circulator                               4.0            > 30
Detector jitter and FBG broadening               1.9               -
total                                            9.1           152.9
"""


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_budget(capsys):
    code, out, _ = run(capsys, "budget")
    assert code == 0 and out == BUDGET


def test_budget_json(capsys):
    code, out, _ = run(capsys, "budget", "-f", "json")
    d = json.loads(out)
    assert [r["insertion_loss_db"] for r in d["rows"]] == [0.8, 0.6, 0.8, 1.0, 4.0, 1.9]
    assert d["total_insertion_loss_db"] == pytest.approx(9.1)


def test_evaluate_json(capsys):
    code, out, _ = run(capsys, "evaluate")
    d = json.loads(out)
    assert code == 0
    assert 14 <= d["skr_bps"] <= 126
    assert d["received_power_dbm"] == pytest.approx(-12.095)


def test_sweep_csv_schema(capsys):
    code, out, _ = run(capsys, "sweep", "--range", "0:12:2")
    rows = list(csv.reader(io.StringIO(out)))
    assert code == 0
    assert tuple(rows[0]) == SWEEP_COLUMNS
    assert len(rows) == 8
    assert len({len(r) for r in rows}) == 1
    assert [float(r[0]) for r in rows[1:]] == [0, 2, 4, 6, 8, 10, 12]


def test_sweep_single_point_equals_evaluate(capsys):
    _, sweep_out, _ = run(capsys, "sweep", "--range", "8.9:8.9:1")
    _, eval_out, _ = run(capsys, "evaluate", "-f", "csv", "--launch-power-dbm", "8.9")
    assert sweep_out == eval_out


def test_sweep_is_byte_stable(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["sweep", "-o", str(a)]) == 0
    assert main(["sweep", "-o", str(b), "--workers", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_length_sweep(capsys):
    code, out, _ = run(capsys, "sweep", "--parameter", "fiber_length", "--range", "50:100:25")
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0][0] == "fiber_length_km" and len(rows) == 4


def test_boundary_and_region(capsys):
    code, out, _ = run(capsys, "boundary")
    assert code == 0 and json.loads(out)["status"] == "bounded"
    code, out, _ = run(capsys, "boundary", "--lengths", "25:95:10", "-f", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 8 and all(r["status"] == "bounded" for r in rows)


def test_boundary_no_key_exit_code(capsys):
    code, out, _ = run(capsys, "boundary", "--length-km", "250")
    assert code == 4 and json.loads(out)["status"] == "no_key"


def test_calibrate_writes_config(capsys, tmp_path):
    path = tmp_path / "cal.cfg"
    code, out, _ = run(capsys, "calibrate", "--write-config", str(path))
    d = json.loads(out)
    assert code == 0 and d["raman_fitted"]
    assert len(d["residuals"]) == 2
    assert any("launch power" in a for a in d["assumptions"])
    code, out2, _ = run(capsys, "evaluate", "-c", str(path))
    assert json.loads(out2)["skr_bps"] == pytest.approx(42.0, rel=1e-3)


def test_calibration_failure_exit_code(capsys, tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("[link]\n[link.span.1]\nlength_km = 95.5\n[plan]\n[receiver]\n[protocol]\n"
                 "[security]\n[calibration]\n[calibration.target.b]\nskr_bps = 1e9\n")
    code, _, err = run(capsys, "calibrate", "-c", str(p))
    assert code == 4 and "bracket" in err


def test_config_error_exit_code(capsys, tmp_path):
    p = tmp_path / "empty.cfg"
    p.write_text("")
    code, _, err = run(capsys, "evaluate", "-c", str(p))
    assert code == 2 and "[link]" in err
    code, _, err = run(capsys, "evaluate", "-c", str(tmp_path / "missing.cfg"))
    assert code == 2


def test_model_error_exit_code(capsys, tmp_path):
    p = tmp_path / "m.cfg"
    p.write_text("[link]\n[link.span.1]\nlength_km = 95.5\n[plan]\n[receiver]\n[protocol]\n"
                 "[security]\n[calibration]\nraman_coefficient_per_km_ghz = -1\n")
    code, _, err = run(capsys, "evaluate", "-c", str(p))
    assert code == 3 and "model error" in err


def test_ideal_report(capsys):
    code, out, _ = run(capsys, "ideal")
    d = json.loads(out)
    assert code == 0
    for key in ("gain_total_db", "gain_front_end_db", "gain_filter_block_db", "gain_snspd_db"):
        assert isinstance(d[key], float)


def test_compare(capsys):
    code, out, _ = run(capsys, "compare", "--launch-powers-dbm", "5.9", "8.9")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 27
    assert rows[-1]["source"] == "simulated" and rows[-1]["launch_power_dbm"] == "8.9"


def test_compare_rejects_bad_literature(capsys, tmp_path):
    p = tmp_path / "lit.csv"
    p.write_text("nonsense\n")
    code, _, err = run(capsys, "compare", "--literature", str(p))
    assert code == 2 and "line 1" in err


def test_verbose_logs_provenance(capsys):
    code, _, err = run(capsys, "-v", "budget")
    assert code == 0 and "(default)" in err
